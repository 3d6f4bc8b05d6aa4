#include "mine/decoding/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mine/core/error.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/model/mine_model.hpp"

namespace mine::decoding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Descending probability, ties by ascending id.
std::vector<std::size_t> ranked(std::span<const double> probs) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return idx;
}

std::vector<double> to_probs(const std::vector<double>& log_probs) {
  std::vector<double> p(log_probs.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs[i]);
  return p;
}

struct Hyp {
  std::vector<std::size_t> tokens;
  double score = 0.0;
};

double ranked_score(const Hyp& h, bool finished, double alpha) {
  if (alpha == 0.0) return h.score;
  const double len = static_cast<double>(h.tokens.size() + (finished ? 1 : 0));
  return h.score / std::pow(std::max(len, 1.0), alpha);
}

Decoded sample_loop(const StepFn& step, std::size_t eos, const DecodeConfig& config, const StepTrace& trace,
                    bool nucleus) {
  Rng rng(config.seed);
  Decoded out;
  while (out.tokens.size() < config.max_len) {
    const auto lp = step(out.tokens);
    const auto probs = to_probs(lp);
    const auto cand = nucleus ? nucleus_candidates(probs, config.k, config.p) : top_k_candidates(probs, config.k, eos);
    const std::size_t tok = sample_from(probs, cand, rng);
    if (trace) trace(probs, cand, tok);
    out.log_prob += lp[tok];
    if (tok == eos) {
      out.terminated = true;
      return out;
    }
    out.tokens.push_back(tok);
  }
  return out;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kGreedy: return "greedy";
    case Method::kBeam: return "beam";
    case Method::kTopK: return "top_k";
    case Method::kNucleus: return "nucleus";
  }
  return "beam";
}

Method parse_method(const std::string& name) {
  if (name == "greedy") return Method::kGreedy;
  if (name == "beam") return Method::kBeam;
  if (name == "top_k") return Method::kTopK;
  if (name == "nucleus") return Method::kNucleus;
  throw ParseError("decode method must be greedy, beam, top_k or nucleus, got \"" + name + "\"");
}

void DecodeConfig::validate(std::size_t vocab_size) const {
  if (beam_size < 1) throw ContractError("beam_size must be at least 1");
  if (k < 1 || k > vocab_size)
    throw ContractError("k must lie in [1, " + std::to_string(vocab_size) + "], got " + std::to_string(k));
  if (!(p > 0.0 && p <= 1.0)) throw ContractError("p must lie in (0, 1]");
  if (max_len < 1) throw ContractError("max_len must be at least 1");
}

Decoded greedy(const StepFn& step, std::size_t eos, std::size_t max_len) {
  Decoded out;
  while (out.tokens.size() < max_len) {
    const auto lp = step(out.tokens);
    std::size_t best = 0;
    for (std::size_t i = 1; i < lp.size(); ++i)
      if (lp[i] > lp[best]) best = i;
    if (lp[best] == kNegInf) break;
    out.log_prob += lp[best];
    if (best == eos) {
      out.terminated = true;
      return out;
    }
    out.tokens.push_back(best);
  }
  return out;
}

Decoded beam_search(const StepFn& step, std::size_t eos, const DecodeConfig& config) {
  const double alpha = config.length_penalty;
  auto better = [&](const Hyp& a, bool fa, const Hyp& b, bool fb) {
    const double sa = ranked_score(a, fa, alpha), sb = ranked_score(b, fb, alpha);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };
  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> finished;
  for (std::size_t len = 0; len < config.max_len && !live.empty(); ++len) {
    struct Cand {
      Hyp hyp;
      bool eos;
    };
    std::vector<Cand> cands;
    for (const auto& h : live) {
      const auto lp = step(h.tokens);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (lp[t] == kNegInf) continue;
        Cand c{h, t == eos};
        c.hyp.tokens.push_back(t);
        c.hyp.score += lp[t];
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(),
              [&](const Cand& a, const Cand& b) { return better(a.hyp, a.eos, b.hyp, b.eos); });
    live.clear();
    for (std::size_t i = 0; i < cands.size() && i < config.beam_size; ++i) {
      if (cands[i].eos) {
        cands[i].hyp.tokens.pop_back();
        finished.push_back(std::move(cands[i].hyp));
      } else {
        live.push_back(std::move(cands[i].hyp));
      }
    }
    // Log-probabilities only fall as hypotheses grow, so once the best
    // finished score beats every live one nothing can overtake it.
    if (alpha == 0.0 && !finished.empty() && !live.empty()) {
      double best_done = kNegInf;
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_live = kNegInf;
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      if (best_done > best_live) break;
    }
  }
  Decoded out;
  if (!finished.empty()) {
    const Hyp* best = &finished.front();
    for (const auto& f : finished)
      if (better(f, true, *best, true)) best = &f;
    out.tokens = best->tokens;
    out.log_prob = best->score;
    out.terminated = true;
    return out;
  }
  if (!live.empty()) {
    const Hyp* best = &live.front();
    for (const auto& h : live)
      if (better(h, false, *best, false)) best = &h;
    out.tokens = best->tokens;
    out.log_prob = best->score;
  }
  return out;
}

std::vector<std::size_t> top_k_candidates(std::span<const double> probs, std::size_t k, std::size_t eos) {
  auto idx = ranked(probs);
  if (idx.size() > k) {
    // Keeping [EOS] reachable stops sampling from running to max length;
    // k == 1 stays plain argmax.
    const bool eos_cut = eos < probs.size() && probs[eos] > 0.0 &&
                         std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), eos) ==
                             idx.begin() + static_cast<std::ptrdiff_t>(k);
    idx.resize(k);
    if (k > 1 && eos_cut) idx.push_back(eos);
  }
  return idx;
}

std::vector<std::size_t> nucleus_candidates(std::span<const double> probs, std::size_t k, double p) {
  auto idx = ranked(probs);
  if (idx.size() > k) idx.resize(k);
  double total = 0.0;
  for (std::size_t i : idx) total += probs[i];
  double mass = 0.0;
  std::size_t n = 0;
  while (n < idx.size()) {
    mass += probs[idx[n]] / total;
    ++n;
    if (mass >= p - 1e-12) break;
  }
  idx.resize(n);
  return idx;
}

std::size_t sample_from(std::span<const double> probs, std::span<const std::size_t> candidates, Rng& rng) {
  if (candidates.empty()) throw ContractError("sample_from: no candidates");
  double total = 0.0;
  for (std::size_t i : candidates) total += probs[i];
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i : candidates) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return candidates.back();
}

Decoded top_k_sample(const StepFn& step, std::size_t eos, const DecodeConfig& config, const StepTrace& trace) {
  return sample_loop(step, eos, config, trace, false);
}

Decoded nucleus_sample(const StepFn& step, std::size_t eos, const DecodeConfig& config, const StepTrace& trace) {
  return sample_loop(step, eos, config, trace, true);
}

Decoded decode(const StepFn& step, std::size_t eos, const DecodeConfig& config) {
  switch (config.method) {
    case Method::kGreedy: return greedy(step, eos, config.max_len);
    case Method::kBeam: return beam_search(step, eos, config);
    case Method::kTopK: return top_k_sample(step, eos, config);
    case Method::kNucleus: return nucleus_sample(step, eos, config);
  }
  return beam_search(step, eos, config);
}

StepFn mine_step(const model::MineModel& model, const Tensor& z) {
  const std::size_t max_prefix = model.config().max_text_len - 1;
  return [&model, z, max_prefix](std::span<const std::size_t> prefix) {
    if (prefix.size() > max_prefix)
      throw ContractError("decode: prefix of " + std::to_string(prefix.size()) + " exceeds max length");
    std::vector<std::size_t> input{data::kDec};
    input.insert(input.end(), prefix.begin(), prefix.end());
    const Array probs = model.next_distribution(input, z);
    std::vector<double> lp(probs.size());
    for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = std::log(probs[i]);
    for (std::size_t t : {data::kPad, data::kUnk, data::kCls, data::kEnc, data::kDec, data::kSep}) lp[t] = kNegInf;
    // Renormalize over the tokens that remain.
    double m = kNegInf;
    for (double v : lp) m = std::max(m, v);
    double s = 0.0;
    for (double v : lp)
      if (v != kNegInf) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (double& v : lp)
      if (v != kNegInf) v -= lse;
    return lp;
  };
}

}  // namespace mine::decoding
