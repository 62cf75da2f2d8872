#pragma once

#include <span>
#include <vector>

namespace offrl::stats {

double mean(std::span<const double> xs);
/// Population standard deviation (divides by n).
double stddev(std::span<const double> xs);
double median(std::vector<double> xs);
/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace offrl::stats
