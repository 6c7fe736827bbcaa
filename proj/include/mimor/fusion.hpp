#pragma once

/// \file fusion.hpp
/// \brief Linear MIMOR fusion of per-engine RSVs and the relevance-feedback
/// weight updates.
///
/// Fused scores divide by N (flat, blended) and by K*N (clustered) rather
/// than by the weight sum; ranking order is unaffected. Learning is
/// additive: each judgment moves a weight by learning_rate * RF * RSV
/// (scaled by cluster membership in the clustered form) and the result is
/// clamped to [0,1].

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mimor/clustering.hpp"
#include "mimor/error.hpp"

namespace mimor {

enum class Judgment { relevant, nonrelevant };

inline int relevance_signal(Judgment j) { return j == Judgment::relevant ? 1 : -1; }

inline std::string_view to_string(Judgment j) {
  return j == Judgment::relevant ? "relevant" : "nonrelevant";
}

inline Judgment parse_judgment(std::string_view s) {
  if (s == "relevant" || s == "1" || s == "+1") return Judgment::relevant;
  if (s == "nonrelevant" || s == "non-relevant" || s == "0" || s == "-1")
    return Judgment::nonrelevant;
  fail(Errc::invalid_argument, "unknown judgment '" + std::string(s) + "'");
}

enum class FusionMode { flat, clustered, blended, blended_clustered };

inline std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::flat: return "flat";
    case FusionMode::clustered: return "clustered";
    case FusionMode::blended: return "blended";
    case FusionMode::blended_clustered: return "blended-clustered";
  }
  return "unknown";
}

inline FusionMode parse_mode(std::string_view s) {
  if (s == "flat") return FusionMode::flat;
  if (s == "clustered") return FusionMode::clustered;
  if (s == "blended") return FusionMode::blended;
  if (s == "blended-clustered") return FusionMode::blended_clustered;
  fail(Errc::invalid_argument, "unknown fusion mode '" + std::string(s) + "'");
}

inline bool uses_clusters(FusionMode m) {
  return m == FusionMode::clustered || m == FusionMode::blended_clustered;
}

inline bool uses_private_model(FusionMode m) {
  return m == FusionMode::blended || m == FusionMode::blended_clustered;
}

struct FusionConfig {
  double learning_rate = 0.05;
  double weight_init = 0.5;
  FusionMode mode = FusionMode::flat;

  void validate() const {
    if (!(learning_rate >= 0.0 && learning_rate <= 1.0))
      fail(Errc::invalid_argument, "learning rate must lie in [0,1]");
    if (!(weight_init >= 0.0 && weight_init <= 1.0))
      fail(Errc::invalid_argument, "weight_init must lie in [0,1]");
  }
};

/// N engines x K clusters, row-major, every entry kept in [0,1].
class WeightMatrix {
 public:
  WeightMatrix() = default;

  WeightMatrix(std::size_t engines, std::size_t clusters, double init = 0.5)
      : rows_(engines), cols_(clusters), data_(engines * clusters, clamp(init)) {
    if (engines == 0 || clusters == 0)
      fail(Errc::dimension, "weight matrix needs at least one row and column");
  }

  static WeightMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty())
      fail(Errc::dimension, "weight matrix needs at least one row and column");
    WeightMatrix w(rows.size(), rows.front().size(), 0.0);
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s].size() != w.cols_) fail(Errc::dimension, "ragged weight matrix");
      for (std::size_t c = 0; c < w.cols_; ++c) {
        if (!std::isfinite(rows[s][c]) || rows[s][c] < 0.0 || rows[s][c] > 1.0)
          fail(Errc::invalid_argument, "weight outside [0,1]");
        w.data_[s * w.cols_ + c] = rows[s][c];
      }
    }
    return w;
  }

  std::size_t engines() const { return rows_; }
  std::size_t clusters() const { return cols_; }

  double operator()(std::size_t s, std::size_t c) const { return data_[s * cols_ + c]; }
  double at(std::size_t s, std::size_t c) const {
    if (s >= rows_ || c >= cols_) fail(Errc::dimension, "weight index out of range");
    return data_[s * cols_ + c];
  }

  void set(std::size_t s, std::size_t c, double value) {
    if (s >= rows_ || c >= cols_) fail(Errc::dimension, "weight index out of range");
    data_[s * cols_ + c] = clamp(value);
  }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t s = 0; s < rows_; ++s) out[s] = (*this)(s, c);
    return out;
  }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(rows_, std::vector<double>(cols_));
    for (std::size_t s = 0; s < rows_; ++s)
      for (std::size_t c = 0; c < cols_; ++c) out[s][c] = (*this)(s, c);
    return out;
  }

  WeightMatrix scaled(double factor) const {
    WeightMatrix w = *this;
    for (double& v : w.data_) v = clamp(v * factor);
    return w;
  }

  bool operator==(const WeightMatrix&) const = default;

 private:
  static double clamp(double v) { return std::clamp(v, 0.0, 1.0); }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

inline void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    fail(Errc::dimension, std::string(what) + ": expected " + std::to_string(a) +
                              " entries, got " + std::to_string(b));
}

inline void check_matrix(const WeightMatrix& w, const MembershipVector& memb,
                         std::span<const double> rsvs) {
  check_same(w.engines(), rsvs.size(), "RSV vector");
  check_same(w.clusters(), memb.size(), "membership vector");
}

inline void check_blend(double p) {
  if (!(p >= 0.0 && p <= 1.0)) fail(Errc::invalid_argument, "blend parameter p outside [0,1]");
}

}  // namespace detail

/// sum_s w_s * rsv_s / N
inline double fuse_flat(std::span<const double> weights, std::span<const double> rsvs) {
  detail::check_same(weights.size(), rsvs.size(), "RSV vector");
  if (weights.empty()) fail(Errc::dimension, "fusion needs at least one engine");
  double sum = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) sum += weights[s] * rsvs[s];
  return sum / static_cast<double>(weights.size());
}

/// sum_s sum_c w_{s,c} * memb_c * rsv_s / (K * N)
inline double fuse_clustered(const WeightMatrix& w, const MembershipVector& memb,
                             std::span<const double> rsvs) {
  detail::check_matrix(w, memb, rsvs);
  double sum = 0.0;
  for (std::size_t s = 0; s < w.engines(); ++s)
    for (std::size_t c = 0; c < w.clusters(); ++c) sum += w(s, c) * memb[c] * rsvs[s];
  return sum / static_cast<double>(w.clusters() * w.engines());
}

/// sum_s (p * priv_s + (1 - p) * pub_s) * rsv_s / N
inline double fuse_blended(std::span<const double> w_private, std::span<const double> w_public,
                           double p, std::span<const double> rsvs) {
  detail::check_blend(p);
  detail::check_same(w_private.size(), w_public.size(), "public weights");
  detail::check_same(w_private.size(), rsvs.size(), "RSV vector");
  if (rsvs.empty()) fail(Errc::dimension, "fusion needs at least one engine");
  double sum = 0.0;
  for (std::size_t s = 0; s < rsvs.size(); ++s)
    sum += (p * w_private[s] + (1.0 - p) * w_public[s]) * rsvs[s];
  return sum / static_cast<double>(rsvs.size());
}

/// Blend of private and public N x K matrices under cluster memberships.
/// Not part of the single-model formulas; combines the blended and clustered
/// forms entry by entry.
inline double fuse_blended_clustered(const WeightMatrix& w_private, const WeightMatrix& w_public,
                                     double p, const MembershipVector& memb,
                                     std::span<const double> rsvs) {
  detail::check_blend(p);
  detail::check_matrix(w_private, memb, rsvs);
  detail::check_matrix(w_public, memb, rsvs);
  double sum = 0.0;
  for (std::size_t s = 0; s < w_private.engines(); ++s)
    for (std::size_t c = 0; c < w_private.clusters(); ++c)
      sum += (p * w_private(s, c) + (1.0 - p) * w_public(s, c)) * memb[c] * rsvs[s];
  return sum / static_cast<double>(w_private.clusters() * w_private.engines());
}

inline std::vector<double> learn_flat(std::span<const double> weights, Judgment rf,
                                      std::span<const double> rsvs, double learning_rate) {
  detail::check_same(weights.size(), rsvs.size(), "RSV vector");
  const double signal = relevance_signal(rf);
  std::vector<double> out(weights.begin(), weights.end());
  for (std::size_t s = 0; s < out.size(); ++s)
    out[s] = std::clamp(out[s] + learning_rate * signal * rsvs[s], 0.0, 1.0);
  return out;
}

inline WeightMatrix learn_clustered(WeightMatrix w, const MembershipVector& memb, Judgment rf,
                                    std::span<const double> rsvs, double learning_rate) {
  detail::check_matrix(w, memb, rsvs);
  const double signal = relevance_signal(rf);
  for (std::size_t s = 0; s < w.engines(); ++s)
    for (std::size_t c = 0; c < w.clusters(); ++c)
      w.set(s, c, w(s, c) + learning_rate * memb[c] * signal * rsvs[s]);
  return w;
}

inline nlohmann::json to_json(const WeightMatrix& w) { return w.rows(); }

inline WeightMatrix weight_matrix_from_json(const nlohmann::json& j) {
  try {
    return WeightMatrix::from_rows(j.get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed weight matrix: ") + e.what());
  }
}

}  // namespace mimor
