#pragma once

#include <span>
#include <vector>

namespace subtune {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(std::span<const double> xs);
/// Ranks starting at 1, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> xs);
/// Spearman rank correlation; ties use average ranks. NaN if either side is
/// constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace subtune
