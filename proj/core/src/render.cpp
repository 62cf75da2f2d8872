#include "offrl/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill.r;
    rgb[i + 1] = fill.g;
    rgb[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[i] = c.r;
  rgb[i + 1] = c.g;
  rgb[i + 2] = c.b;
}

namespace {

/// Maps v in [lo, hi] to an integer pixel in [0, n-1].
int toPixel(double v, double lo, double hi, int n) {
  const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<int>(std::lround(u * (n - 1)));
}

void fillDisc(Image& img, int cx, int cy, int radius, Rgb c) {
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) img.set(cx + dx, cy + dy, c);
    }
  }
}

void fillRect(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) img.set(x, y, c);
  }
}

// Bresenham.
void drawLine(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

Image renderPointMass(std::span<const double> s) {
  Image img(kRenderSize, kRenderSize, palette::kBackground);
  const auto [gx, gy] = pointMassPixel(s[2], s[3]);
  fillDisc(img, gx, gy, 3, palette::kGoal);
  const auto [ax, ay] = pointMassPixel(s[0], s[1]);
  fillDisc(img, ax, ay, 2, palette::kAgent);
  return img;
}

Image renderCartPole(std::span<const double> s) {
  Image img(kRenderSize, kRenderSize, palette::kBackground);
  constexpr int kTrackY = 48;
  fillRect(img, 0, kTrackY + 4, kRenderSize - 1, kTrackY + 4, palette::kTrack);
  const int cx = toPixel(s[0], -cartpole::kTrackHalfWidth, cartpole::kTrackHalfWidth, kRenderSize);
  fillRect(img, cx - 5, kTrackY, cx + 5, kTrackY + 3, palette::kCart);
  // Pole drawn 24 px long; angle measured from vertical, positive leans right.
  constexpr double kPolePixels = 24.0;
  const int tipx = cx + static_cast<int>(std::lround(kPolePixels * std::sin(s[2])));
  const int tipy = kTrackY - static_cast<int>(std::lround(kPolePixels * std::cos(s[2])));
  drawLine(img, cx, kTrackY, tipx, tipy, palette::kPole);
  return img;
}

Image renderChain(std::span<const double> s) {
  Image img(kRenderSize, kRenderSize, palette::kBackground);
  constexpr int kCellW = 12, kTop = 26, kBottom = 37, kLeft = 2;
  const int agent = static_cast<int>(std::lround(s[0]));
  for (int i = 0; i < chain::kNumStates; ++i) {
    const int x0 = kLeft + i * kCellW;
    const Rgb c = i == agent ? palette::kAgent : (i == chain::kTerminal ? palette::kGoal : palette::kCell);
    fillRect(img, x0 + 1, kTop, x0 + kCellW - 1, kBottom, c);
  }
  return img;
}

}  // namespace

std::pair<int, int> pointMassPixel(double x, double y) {
  // y grows upward in world space, downward in the raster.
  return {toPixel(x, -1.0, 1.0, kRenderSize), toPixel(-y, -1.0, 1.0, kRenderSize)};
}

Image render(const EnvSpec& spec, std::span<const double> state) {
  if (state.size() != static_cast<std::size_t>(spec.state_dim)) throw ContractError("render: state dimension mismatch");
  switch (spec.id) {
    case EnvId::PointMass2D: return renderPointMass(state);
    case EnvId::CartPoleBalance: return renderCartPole(state);
    case EnvId::ChainMDP: return renderChain(state);
  }
  return {};
}

std::vector<std::uint8_t> encodePpm(const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

void writePpm(const std::filesystem::path& path, const Image& image) { writeFileBytes(path, encodePpm(image)); }

std::string frameFileName(std::uint32_t traj, std::uint32_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05u_%04u.ppm", traj, t);
  return buf;
}

}  // namespace offrl
