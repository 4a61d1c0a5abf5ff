#pragma once

// Scalar information measures over categorical distributions on K bins.
// Header-only; the batched autograd versions live in mi_regularizer.hpp.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <vector>

namespace cmi::info {

// Probabilities are clamped to [kProbFloor, 1] inside every log.
inline constexpr double kProbFloor = 1e-8;

template <std::floating_point T>
T clamped_log(T p) {
  return std::log(std::clamp(p, static_cast<T>(kProbFloor), static_cast<T>(1)));
}

template <std::floating_point T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const T peak = *std::max_element(out.begin(), out.end());
  T total = 0;
  for (auto& v : out) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

// H(p) = -sum p_i log p_i, natural log.
template <std::floating_point T>
T entropy(std::span<const T> p) {
  T h = 0;
  for (T pi : p) h -= pi * clamped_log(pi);
  return h;
}

// H_q(p) = -sum p_i log q_i.
template <std::floating_point T>
T cross_entropy(std::span<const T> p, std::span<const T> q) {
  if (p.size() != q.size()) throw std::invalid_argument("cross_entropy: length mismatch");
  T h = 0;
  for (std::size_t i = 0; i < p.size(); ++i) h -= p[i] * clamped_log(q[i]);
  return h;
}

// KL(p || q) = H_q(p) - H(p).
template <std::floating_point T>
T kl_divergence(std::span<const T> p, std::span<const T> q) {
  return cross_entropy(p, q) - entropy(p);
}

// (H_g(a) + H_a(g)) - (KL(a||g) + KL(g||a)), term by term.
template <std::floating_point T>
T mi_loss(std::span<const T> a, std::span<const T> g) {
  return (cross_entropy(a, g) + cross_entropy(g, a)) - (kl_divergence(a, g) + kl_divergence(g, a));
}

// The same quantity through the algebraic identity H(a) + H(g).
template <std::floating_point T>
T mi_loss_identity(std::span<const T> a, std::span<const T> g) {
  if (a.size() != g.size()) throw std::invalid_argument("mi_loss_identity: length mismatch");
  return entropy(a) + entropy(g);
}

// |cos(a, b)|; returns a negative value when either vector is zero.
template <std::floating_point T>
T abs_cosine(std::span<const T> a, std::span<const T> b) {
  T dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return T(-1);
  return std::min(T(1), std::abs(dot) / std::sqrt(na * nb));
}

}  // namespace cmi::info
