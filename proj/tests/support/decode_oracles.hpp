#pragma once

// Independent references for the decoders: a seeded table model, exhaustive
// enumeration and a plain sort-based ranking.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mine/core/rng.hpp"
#include "mine/decoding/decoding.hpp"

namespace mine::testing {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Random next-token model: log-probs are a fixed function of (seed, prefix).
inline decoding::StepFn table_model(std::uint64_t seed, std::size_t vocab, double spread = 2.0) {
  return [seed, vocab, spread](std::span<const std::size_t> prefix) {
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL + 17;
    for (std::size_t t : prefix) h = (h ^ (t + 1)) * 0x100000001B3ULL;
    Rng rng(h);
    std::vector<double> lp(vocab);
    double mx = kNegInf;
    for (auto& v : lp) {
      v = rng.normal() * spread;
      mx = std::max(mx, v);
    }
    double s = 0.0;
    for (double v : lp) s += std::exp(v - mx);
    for (auto& v : lp) v -= mx + std::log(s);
    return lp;
  };
}

struct Best {
  std::vector<std::size_t> tokens;
  double log_prob = kNegInf;
  bool found = false;
};

// Enumerates every [EOS]-terminated sequence of at most max_len tokens.
inline void enumerate(const decoding::StepFn& step, std::size_t eos, std::size_t vocab, std::size_t max_len,
               std::vector<std::size_t>& prefix, double score, Best& best) {
  if (prefix.size() == max_len) return;
  const auto lp = step(prefix);
  for (std::size_t t = 0; t < vocab; ++t) {
    if (lp[t] == kNegInf) continue;
    const double s = score + lp[t];
    if (t == eos) {
      if (!best.found || s > best.log_prob || (s == best.log_prob && prefix < best.tokens)) {
        best = {prefix, s, true};
      }
      continue;
    }
    prefix.push_back(t);
    enumerate(step, eos, vocab, max_len, prefix, s, best);
    prefix.pop_back();
  }
}

// Independent ranking: descending probability, ascending id; zeros dropped.
inline std::vector<std::size_t> oracle_rank(std::span<const double> p) {
  std::vector<std::pair<double, std::size_t>> v;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) v.push_back({-p[i], i});
  std::sort(v.begin(), v.end());
  std::vector<std::size_t> out;
  for (auto& [np, i] : v) out.push_back(i);
  return out;
}

}  // namespace mine::testing
