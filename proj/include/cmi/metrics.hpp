#pragma once

// Saliency evaluation measures: MAE, mean F-measure, mean E-measure,
// S-measure, and the embedding cosine diagnostic.
//
// All kernels are pure functions over row-major maps. Predictions are in
// [0, 1]; ground truth is binary. F and E are averaged over the 256 uniform
// thresholds t = i / 255, binarising with pred >= t.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include "cmi/error.hpp"
#include "cmi/information.hpp"

namespace cmi::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kAlignEps = 1e-8;
inline constexpr double kStructEps = std::numeric_limits<double>::epsilon();

template <std::floating_point T>
struct MapView {
  std::span<const T> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MapView(std::span<const T> d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {
    require(d.size() == r * c, ErrorKind::kContract, "map size does not match rows * cols");
  }

  std::size_t size() const { return data.size(); }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

namespace detail {

template <std::floating_point T>
void check_shapes(const MapView<T>& pred, const MapView<T>& gt) {
  require(pred.rows == gt.rows && pred.cols == gt.cols, ErrorKind::kContract,
          "prediction " + std::to_string(pred.rows) + "x" + std::to_string(pred.cols) +
              " and ground truth " + std::to_string(gt.rows) + "x" + std::to_string(gt.cols) +
              " differ in shape");
}

// Largest threshold index i with i / 255 <= v, or -1.
template <std::floating_point T>
int threshold_level(T v) {
  const double x = static_cast<double>(v);
  int l = static_cast<int>(std::clamp(std::floor(x * 255.0), -1.0, 255.0));
  while (l < 255 && (l + 1) / 255.0 <= x) ++l;
  while (l >= 0 && l / 255.0 > x) --l;
  return l;
}

// Per-threshold confusion counts: tp[i], fp[i] for pred >= i / 255.
struct ThresholdCounts {
  std::array<std::int64_t, kThresholds> tp{};
  std::array<std::int64_t, kThresholds> fp{};
  std::int64_t positives = 0;
  std::int64_t total = 0;
};

template <std::floating_point T>
ThresholdCounts threshold_counts(const MapView<T>& pred, const MapView<T>& gt) {
  ThresholdCounts c;
  std::array<std::int64_t, kThresholds> fg_hist{}, bg_hist{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool fg = gt.data[i] >= T(0.5);
    c.positives += fg ? 1 : 0;
    const int level = threshold_level(pred.data[i]);
    if (level < 0) continue;
    (fg ? fg_hist : bg_hist)[static_cast<std::size_t>(level)] += 1;
  }
  c.total = static_cast<std::int64_t>(pred.size());
  std::int64_t tp = 0, fp = 0;
  for (int i = kThresholds - 1; i >= 0; --i) {
    tp += fg_hist[static_cast<std::size_t>(i)];
    fp += bg_hist[static_cast<std::size_t>(i)];
    c.tp[static_cast<std::size_t>(i)] = tp;
    c.fp[static_cast<std::size_t>(i)] = fp;
  }
  return c;
}

inline double enhanced_alignment(double phi_b, double phi_y) {
  const double xi = 2.0 * phi_b * phi_y / (phi_b * phi_b + phi_y * phi_y + kAlignEps);
  return (xi + 1.0) * (xi + 1.0) / 4.0;
}

struct Moments {
  double mean = 0;
  double stddev = 0;  // sample (N - 1) normalisation
  std::size_t count = 0;
};

template <std::floating_point T, typename Pick, typename Value>
Moments moments(const MapView<T>& m, Pick pick, Value value) {
  Moments out;
  double sum = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!pick(i)) continue;
    sum += value(i);
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum / static_cast<double>(out.count);
  if (out.count > 1) {
    double ss = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!pick(i)) continue;
      const double d = value(i) - out.mean;
      ss += d * d;
    }
    out.stddev = std::sqrt(ss / static_cast<double>(out.count - 1));
  }
  return out;
}

inline double object_score(const Moments& m) {
  return 2.0 * m.mean / (m.mean * m.mean + 1.0 + m.stddev + kStructEps);
}

// SSIM-style structural similarity over the block [r0, r1) x [c0, c1).
template <std::floating_point T>
double block_ssim(const MapView<T>& pred, const MapView<T>& gt, std::size_t r0, std::size_t r1,
                  std::size_t c0, std::size_t c1) {
  const double n = static_cast<double>((r1 - r0) * (c1 - c0));
  if (n == 0) return 0.0;
  double sp = 0, sg = 0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      sp += pred(r, c);
      sg += gt(r, c);
    }
  }
  const double x = sp / n, y = sg / n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = pred(r, c) - x, dy = gt(r, c) - y;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  const double norm = n - 1.0 + kStructEps;
  vx /= norm;
  vy /= norm;
  cxy /= norm;
  const double alpha = 4.0 * x * y * cxy;
  const double beta = (x * x + y * y) * (vx + vy);
  if (alpha != 0.0) return alpha / (beta + kStructEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

template <std::floating_point T>
double s_object(const MapView<T>& pred, const MapView<T>& gt, double fg_ratio) {
  auto is_fg = [&](std::size_t i) { return gt.data[i] >= T(0.5); };
  auto is_bg = [&](std::size_t i) { return gt.data[i] < T(0.5); };
  auto fg = moments(pred, is_fg, [&](std::size_t i) { return double(pred.data[i]); });
  auto bg = moments(pred, is_bg, [&](std::size_t i) { return 1.0 - double(pred.data[i]); });
  return fg_ratio * object_score(fg) + (1.0 - fg_ratio) * object_score(bg);
}

template <std::floating_point T>
double s_region(const MapView<T>& pred, const MapView<T>& gt) {
  // Centroid in 1-based pixel coordinates, rounded; the split puts the first
  // X columns / Y rows in the left / top blocks.
  double total = 0, sx = 0, sy = 0;
  for (std::size_t r = 0; r < gt.rows; ++r) {
    for (std::size_t c = 0; c < gt.cols; ++c) {
      const double g = gt(r, c);
      total += g;
      sx += g * static_cast<double>(c + 1);
      sy += g * static_cast<double>(r + 1);
    }
  }
  std::size_t x, y;
  if (total == 0) {
    x = static_cast<std::size_t>(std::round(gt.cols / 2.0));
    y = static_cast<std::size_t>(std::round(gt.rows / 2.0));
  } else {
    x = static_cast<std::size_t>(std::round(sx / total));
    y = static_cast<std::size_t>(std::round(sy / total));
  }
  x = std::min(x, gt.cols);
  y = std::min(y, gt.rows);

  const double area = static_cast<double>(gt.rows * gt.cols);
  const double w1 = static_cast<double>(x * y) / area;
  const double w2 = static_cast<double>((gt.cols - x) * y) / area;
  const double w3 = static_cast<double>(x * (gt.rows - y)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(pred, gt, 0, y, 0, x) + w2 * block_ssim(pred, gt, 0, y, x, gt.cols) +
         w3 * block_ssim(pred, gt, y, gt.rows, 0, x) +
         w4 * block_ssim(pred, gt, y, gt.rows, x, gt.cols);
}

}  // namespace detail

// Mean absolute error.
template <std::floating_point T>
double mae(const MapView<T>& pred, const MapView<T>& gt) {
  detail::check_shapes(pred, gt);
  if (pred.size() == 0) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += std::abs(double(pred.data[i]) - double(gt.data[i]));
  }
  return sum / static_cast<double>(pred.size());
}

// Mean of F_beta over the 256 thresholds. nullopt when gt has no foreground.
template <std::floating_point T>
std::optional<double> mean_f_measure(const MapView<T>& pred, const MapView<T>& gt,
                                     double beta_sq = 0.3) {
  detail::check_shapes(pred, gt);
  const auto c = detail::threshold_counts(pred, gt);
  if (c.positives == 0) return std::nullopt;
  double sum = 0;
  for (std::size_t i = 0; i < kThresholds; ++i) {
    const double tp = double(c.tp[i]);
    const double predicted = tp + double(c.fp[i]);
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = tp / double(c.positives);
    const double denom = beta_sq * precision + recall;
    sum += denom > 0 ? (1.0 + beta_sq) * precision * recall / denom : 0.0;
  }
  return sum / kThresholds;
}

// Mean enhanced-alignment measure over the 256 thresholds.
template <std::floating_point T>
double mean_e_measure(const MapView<T>& pred, const MapView<T>& gt) {
  detail::check_shapes(pred, gt);
  const auto c = detail::threshold_counts(pred, gt);
  if (c.total == 0) return 0.0;
  const double n = double(c.total);
  const double pos = double(c.positives);
  const double mean_y = pos / n;
  double sum = 0;
  for (std::size_t i = 0; i < kThresholds; ++i) {
    const double tp = double(c.tp[i]);
    const double fp = double(c.fp[i]);
    const double mean_b = (tp + fp) / n;
    if (c.positives == c.total) {
      sum += mean_b;
      continue;
    }
    if (c.positives == 0) {
      sum += 1.0 - mean_b;
      continue;
    }
    const double fn = pos - tp;
    const double tn = n - tp - fp - fn;
    sum += (tp * detail::enhanced_alignment(1.0 - mean_b, 1.0 - mean_y) +
            fp * detail::enhanced_alignment(1.0 - mean_b, -mean_y) +
            fn * detail::enhanced_alignment(-mean_b, 1.0 - mean_y) +
            tn * detail::enhanced_alignment(-mean_b, -mean_y)) /
           n;
  }
  return sum / kThresholds;
}

// Structure measure: alpha * object-aware + (1 - alpha) * region-aware term.
template <std::floating_point T>
double s_measure(const MapView<T>& pred, const MapView<T>& gt, double alpha = 0.5) {
  detail::check_shapes(pred, gt);
  if (pred.size() == 0) return 0.0;
  double pred_sum = 0, gt_sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred_sum += pred.data[i];
    gt_sum += gt.data[i] >= T(0.5) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(pred.size());
  const double fg_ratio = gt_sum / n;
  double q;
  if (gt_sum == 0) {
    q = 1.0 - pred_sum / n;
  } else if (gt_sum == n) {
    q = pred_sum / n;
  } else {
    q = alpha * detail::s_object(pred, gt, fg_ratio) +
        (1.0 - alpha) * detail::s_region(pred, gt);
  }
  return std::clamp(q, 0.0, 1.0);
}

struct CosineDiagnostic {
  std::optional<double> value;  // nullopt when every pair was skipped
  std::size_t used = 0;
  std::size_t skipped = 0;  // pairs containing a zero vector
};

// Mean |cos(a_b, g_b)| over a batch of K-vectors stored row-major.
template <std::floating_point T>
CosineDiagnostic cosine_diag(std::span<const T> a, std::span<const T> g, std::size_t k) {
  require(k > 0 && a.size() == g.size() && a.size() % k == 0, ErrorKind::kContract,
          "cosine_diag: batches must have equal length and a multiple of K entries");
  CosineDiagnostic out;
  double sum = 0;
  for (std::size_t off = 0; off < a.size(); off += k) {
    const T c = info::abs_cosine(a.subspan(off, k), g.subspan(off, k));
    if (c < 0) {
      ++out.skipped;
      continue;
    }
    sum += c;
    ++out.used;
  }
  if (out.used > 0) out.value = sum / static_cast<double>(out.used);
  return out;
}

}  // namespace cmi::metrics
