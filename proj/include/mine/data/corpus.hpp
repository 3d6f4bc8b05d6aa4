#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mine::data {

// One customer feedback item: text plus the images posted with it.
struct ReviewRecord {
  std::string review_id;
  std::string text;
  std::vector<std::string> image_paths;
  std::string category;

  bool operator==(const ReviewRecord&) const = default;
};

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const CharSpan&) const = default;
};

// Contiguous segment of a (preprocessed) review text.
struct Verbatim {
  std::string verbatim_id;
  std::string review_id;
  std::string text;
  CharSpan span;

  bool operator==(const Verbatim&) const = default;
};

enum class PairLabel { kPositive, kNegative };

// Scored (verbatim, image) pair.
struct PairRecord {
  std::string pair_id;
  std::string verbatim_id;
  std::string review_id;
  std::string verbatim;
  std::string image_path;
  std::string category;  // of the source review; empty when unknown
  double score = 0.0;  // raw cosine in [-1, 1]
  std::optional<PairLabel> label;
  std::optional<double> confidence;  // in [0, 1], used when serializing prompts
  std::optional<std::string> error;  // set when the image could not be read

  bool operator==(const PairRecord&) const = default;
};

struct RecordError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct CorpusLoad {
  std::vector<ReviewRecord> records;
  std::vector<RecordError> errors;
  bool ok() const { return errors.empty(); }
};

// Reads the corpus JSONL. Bad lines are reported, not thrown, so one run
// surfaces every problem; image paths are not opened here.
CorpusLoad load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path,
                 const std::vector<ReviewRecord>& records);

std::vector<PairRecord> load_pairs(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path,
                const std::vector<PairRecord>& pairs);

std::vector<Verbatim> load_verbatims(const std::filesystem::path& path);
void save_verbatims(const std::filesystem::path& path,
                    const std::vector<Verbatim>& verbatims);

// Score formatted with exactly two decimals, as written to pair files and
// prompt targets.
std::string format_score(double score);
double round_score(double score);

std::string label_name(PairLabel label);
PairLabel parse_label(const std::string& name);

}  // namespace mine::data
