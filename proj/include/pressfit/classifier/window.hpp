#pragma once

#include "pressfit/core/types.hpp"

#include <Eigen/Core>

#include <vector>

namespace pressfit::classifier {

/// 6 x n wrench history. Rows: fx, fy, fz, tx, ty, tz. Columns run oldest to newest.
using WrenchWindow = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Sensor clock: 29 samples per second.
constexpr double kSampleRate = 29.0;

/// max(1, round(seconds * 29)).
int samples_for(double seconds);

/// Column i holds log[first + i].
WrenchWindow make_window(const std::vector<TimedWrench> &log, std::size_t first, std::size_t n);

/// The most recent min(n, log.size()) samples.
WrenchWindow latest_window(const std::vector<TimedWrench> &log, std::size_t n);

/// mirror_y applied to every column.
WrenchWindow mirror_window(const WrenchWindow &w);

} // namespace pressfit::classifier
