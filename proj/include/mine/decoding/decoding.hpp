#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mine/core/array.hpp"
#include "mine/core/rng.hpp"
#include "mine/core/tensor.hpp"

namespace mine::model {
class MineModel;
}

// Greedy, beam, top-k and nucleus decoding over any next-token model.
namespace mine::decoding {

// Log-probabilities of the next token given the generated prefix (which
// excludes the start token). -inf marks tokens that may never be emitted.
using StepFn = std::function<std::vector<double>(std::span<const std::size_t> prefix)>;

enum class Method { kGreedy, kBeam, kTopK, kNucleus };
std::string method_name(Method m);
Method parse_method(const std::string& name);

struct DecodeConfig {
  Method method = Method::kBeam;
  std::size_t beam_size = 10;
  std::size_t k = 50;
  double p = 0.95;
  std::size_t max_len = 63;  // generated tokens, [EOS] included
  std::uint64_t seed = 7;
  double length_penalty = 0.0;  // beam only; score / len^alpha, off at 0

  void validate(std::size_t vocab_size) const;
};

struct Decoded {
  std::vector<std::size_t> tokens;  // [EOS] excluded
  double log_prob = 0.0;           // sum over emitted tokens, [EOS] included
  bool terminated = false;         // false: hit max_len without [EOS]
};

Decoded greedy(const StepFn& step, std::size_t eos, std::size_t max_len);
// Un-normalized sum-of-log-prob beam search. Finished hypotheses compete on
// score, ties going to the lexicographically smaller token sequence. With no
// finished hypothesis by max_len the best live one comes back unterminated.
Decoded beam_search(const StepFn& step, std::size_t eos, const DecodeConfig& config);

// Indices allowed at one sampling step, in descending probability (ties by
// id). Tokens with zero probability never qualify.
//   top-k: the k most likely tokens, plus eos when k > 1 and eos is missing.
//   nucleus: top-k first, then the shortest prefix of the renormalized
//   candidates whose mass reaches p.
std::vector<std::size_t> top_k_candidates(std::span<const double> probs, std::size_t k, std::size_t eos);
std::vector<std::size_t> nucleus_candidates(std::span<const double> probs, std::size_t k, double p);
// Draws from probs renormalized over candidates.
std::size_t sample_from(std::span<const double> probs, std::span<const std::size_t> candidates, Rng& rng);

// trace, when given, receives (probs, candidates, chosen) for every step.
using StepTrace = std::function<void(std::span<const double>, std::span<const std::size_t>, std::size_t)>;
Decoded top_k_sample(const StepFn& step, std::size_t eos, const DecodeConfig& config, const StepTrace& trace = {});
Decoded nucleus_sample(const StepFn& step, std::size_t eos, const DecodeConfig& config,
                       const StepTrace& trace = {});

Decoded decode(const StepFn& step, std::size_t eos, const DecodeConfig& config);

// Next-token log-probabilities of a MINE model for a fixed grounded
// encoding z. [PAD], [UNK], [CLS], [ENC], [DEC] and [SEP] are masked out.
StepFn mine_step(const model::MineModel& model, const Tensor& z);

}  // namespace mine::decoding
