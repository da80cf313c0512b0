#include "fugsim/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fugsim::metrics {

double rate_bits(const ChannelDraw& draw) {
  if (draw.snr < 0.0 || draw.h_sq < 0.0)
    throw std::invalid_argument("rate_bits: snr and |h|^2 must be >= 0");
  return std::log2(1.0 + draw.snr * draw.h_sq);
}

double access_delay_s(const DelayRecord& record) {
  if (record.hardware_s < 0.0 || record.overhead_s < 0.0 ||
      record.queue_s < 0.0 || record.transmit_s < 0.0)
    throw std::invalid_argument("access_delay_s: negative delay component");
  return record.overhead_s + record.queue_s;
}

long ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

long ConfusionMatrix::support(int true_class) const {
  return counts[true_class][0] + counts[true_class][1];
}

long ConfusionMatrix::predicted(int pred_class) const {
  return counts[0][pred_class] + counts[1][pred_class];
}

void ConfusionMatrix::add(int true_class, int pred_class, long n) {
  counts[true_class][pred_class] += n;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      if (cm.counts[i][j] < 0)
        throw std::invalid_argument("classification_report: negative count");
  const long total = cm.total();
  if (total <= 0)
    throw std::invalid_argument("classification_report: empty matrix");

  ClassificationReport report;
  report.accuracy =
      static_cast<double>(cm.counts[0][0] + cm.counts[1][1]) / total;
  for (int c = 0; c < 2; ++c) {
    ClassMetrics& m = report.per_class[c];
    const long tp = cm.counts[c][c];
    const long pred = cm.predicted(c);
    const long sup = cm.support(c);
    if (pred > 0) {
      m.precision = static_cast<double>(tp) / pred;
    } else {
      m.precision = 0.0;
      m.precision_defined = false;
    }
    if (sup > 0) {
      m.recall = static_cast<double>(tp) / sup;
    } else {
      m.recall = 0.0;
      m.recall_defined = false;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.f1 = 0.0;
      m.f1_defined = m.precision_defined && m.recall_defined;
    }
  }
  return report;
}

std::string report_csv(const ConfusionMatrix& cm,
                       const ClassificationReport& report) {
  std::ostringstream out;
  out << "class,true_data,true_alarm,accuracy,precision,recall,f1,flags\n";
  const char* names[2] = {"data", "alarm"};
  for (int c = 0; c < 2; ++c) {
    const ClassMetrics& m = report.per_class[c];
    out << names[c] << ',' << cm.counts[c][0] << ',' << cm.counts[c][1] << ','
        << report.accuracy << ',' << m.precision << ',' << m.recall << ','
        << m.f1 << ',';
    if (!m.precision_defined) out << "precision_undefined;";
    if (!m.recall_defined) out << "recall_undefined;";
    if (!m.f1_defined) out << "f1_undefined;";
    out << '\n';
  }
  return out.str();
}

}  // namespace fugsim::metrics
