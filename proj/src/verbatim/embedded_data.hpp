#pragma once

#include <string_view>

// Contents of data/*.tsv, compiled in so the binaries run from any cwd.
namespace mine::verbatim::embedded {
extern const std::string_view kLexiconTsv;
extern const std::string_view kConjunctionsTsv;
}  // namespace mine::verbatim::embedded
