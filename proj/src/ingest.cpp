#include "fugsim/ingest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fugsim::ingest {

void BinarizeRule::validate() const {
  if (mode == Mode::statistical && k < 0.0)
    throw std::invalid_argument("BinarizeRule: k must be >= 0");
  if (train_span < 0)
    throw std::invalid_argument("BinarizeRule: train_span must be >= 0");
}

namespace {

// NAB timestamps look like "2013-12-02 21:15:00". Gaps are tolerated;
// only the ordering matters.
bool parse_timestamp(const std::string& text, std::int64_t* out) {
  int y, mo, d, h, mi, s;
  if (std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi,
                  &s) != 6)
    return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
    return false;
  // Days since epoch by civil-date arithmetic.
  const int yy = y - (mo <= 2 ? 1 : 0);
  const int era = (yy >= 0 ? yy : yy - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(yy - era * 400);
  const unsigned doy = (153u * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const std::int64_t days =
      static_cast<std::int64_t>(era) * 146097 + static_cast<int>(doe) -
      719468;
  *out = days * 86400 + h * 3600 + mi * 60 + s;
  return true;
}

}  // namespace

RawSeries parse_series(std::istream& in, const std::string& name) {
  RawSeries series;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line.rfind("timestamp", 0) != 0)
        throw std::runtime_error(name +
                                 ": expected 'timestamp,value' header");
      continue;
    }
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(name + ": malformed row at line " +
                               std::to_string(line_no));
    std::int64_t ts = 0;
    if (!parse_timestamp(line.substr(0, comma), &ts))
      throw std::runtime_error(name + ": unparseable timestamp at line " +
                               std::to_string(line_no));
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw std::runtime_error(name + ": unparseable value at line " +
                               std::to_string(line_no));
    }
    if (!series.timestamps.empty() && ts <= series.timestamps.back())
      throw std::runtime_error(name +
                               ": non-monotonic timestamp at line " +
                               std::to_string(line_no));
    series.timestamps.push_back(ts);
    series.values.push_back(value);
  }
  return series;
}

RawSeries load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open series file: " + path);
  return parse_series(in, path);
}

predictor::ActivitySeries binarize(const RawSeries& series,
                                   const BinarizeRule& rule) {
  rule.validate();
  if (series.size() == 0)
    throw std::invalid_argument("binarize: empty series");

  double threshold = rule.threshold;
  if (rule.mode == BinarizeRule::Mode::statistical) {
    const std::size_t span =
        rule.train_span > 0
            ? std::min<std::size_t>(rule.train_span, series.size())
            : series.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < span; ++i) mean += series.values[i];
    mean /= static_cast<double>(span);
    double var = 0.0;
    for (std::size_t i = 0; i < span; ++i) {
      const double d = series.values[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(span);
    if (var <= 0.0)
      throw std::runtime_error(
          "binarize: zero variance over the training span");
    threshold = mean + rule.k * std::sqrt(var);
  }

  predictor::ActivitySeries out;
  out.bits.reserve(series.size());
  for (double v : series.values)
    out.append(v > threshold ? 1 : 0, predictor::Provenance::observed);
  return out;
}

std::pair<predictor::ActivitySeries, predictor::ActivitySeries> split_train(
    const predictor::ActivitySeries& series, int train_span,
    const predictor::WindowPlan& plan) {
  plan.validate();
  if (train_span <= 0)
    throw std::invalid_argument("split_train: train_span must be > 0");
  const long needed = static_cast<long>(train_span) + plan.predict_span;
  if (static_cast<long>(series.size()) < needed)
    throw std::invalid_argument(
        "split_train: series too short for one prediction iteration");

  predictor::ActivitySeries train, eval;
  train.device_id = series.device_id;
  eval.device_id = series.device_id;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i < static_cast<std::size_t>(train_span))
      train.append(series.bits[i], series.prov[i]);
    else
      eval.append(series.bits[i], series.prov[i]);
  }
  return {train, eval};
}

void write_activity_csv(const predictor::ActivitySeries& series,
                        std::ostream& out) {
  out << "index,bit\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    out << i << ',' << int(series.bits[i]) << '\n';
}

predictor::ActivitySeries read_activity_csv(std::istream& in) {
  predictor::ActivitySeries series;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("index", 0) == 0) continue;
    std::istringstream row(line);
    long index = 0;
    int bit = 0;
    char comma = 0;
    if (!(row >> index >> comma >> bit) || (bit != 0 && bit != 1))
      throw std::runtime_error("activity csv: malformed line " +
                               std::to_string(line_no));
    series.append(static_cast<std::uint8_t>(bit),
                  predictor::Provenance::observed);
  }
  return series;
}

predictor::ActivitySeries load_activity_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open activity file: " + path);
  return read_activity_csv(in);
}

}  // namespace fugsim::ingest
