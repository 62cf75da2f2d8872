#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "offrl/envs.hpp"

namespace offrl {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Row-major 8-bit RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill = {});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool operator==(const Image&) const = default;
};

inline constexpr int kRenderSize = 64;

/// Deterministic raster of an environment state. Coordinates are mapped to
/// pixels once; everything after that is integer rasterization.
Image render(const EnvSpec& spec, std::span<const double> state);

/// Pixel coordinates of a PointMass world position.
std::pair<int, int> pointMassPixel(double x, double y);

namespace palette {
inline constexpr Rgb kBackground{255, 255, 255};
inline constexpr Rgb kAgent{220, 40, 40};
inline constexpr Rgb kGoal{40, 170, 60};
inline constexpr Rgb kCart{40, 60, 200};
inline constexpr Rgb kPole{200, 140, 40};
inline constexpr Rgb kTrack{90, 90, 90};
inline constexpr Rgb kCell{200, 200, 200};
}  // namespace palette

std::vector<std::uint8_t> encodePpm(const Image& image);
void writePpm(const std::filesystem::path& path, const Image& image);
/// `{traj:05}_{t:04}.ppm`
std::string frameFileName(std::uint32_t traj, std::uint32_t t);

}  // namespace offrl
