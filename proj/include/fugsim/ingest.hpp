#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fugsim/predictor.hpp"

namespace fugsim::ingest {

struct RawSeries {
  std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct BinarizeRule {
  enum class Mode { absolute, statistical };
  Mode mode = Mode::statistical;
  double threshold = 0.0;  // absolute mode
  double k = 1.5;          // statistical: mean + k * std over the train span
  int train_span = 0;      // 0 = whole series

  void validate() const;
};

// NAB two-column CSV (timestamp,value with a header row). Throws on a
// missing file, a malformed row (naming the line number), or
// non-monotonic timestamps.
RawSeries load_series(const std::string& path);
RawSeries parse_series(std::istream& in, const std::string& name);

// Activity bit = 1 iff the value exceeds the rule threshold.
predictor::ActivitySeries binarize(const RawSeries& series,
                                   const BinarizeRule& rule);

// Contiguous split into the initial training span and the evaluation
// stream; validates there is room for at least one protocol iteration.
std::pair<predictor::ActivitySeries, predictor::ActivitySeries> split_train(
    const predictor::ActivitySeries& series, int train_span,
    const predictor::WindowPlan& plan);

// Activity CSV index,bit.
void write_activity_csv(const predictor::ActivitySeries& series,
                        std::ostream& out);
predictor::ActivitySeries read_activity_csv(std::istream& in);
predictor::ActivitySeries load_activity_file(const std::string& path);

}  // namespace fugsim::ingest
