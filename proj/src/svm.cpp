#include "fugsim/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fugsim/random.hpp"

namespace fugsim::svm {

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(sigma > 0.0))
    throw std::invalid_argument("KernelSpec: rbf sigma must be > 0");
  if (kind == KernelKind::polynomial && degree < 1)
    throw std::invalid_argument("KernelSpec: polynomial degree must be >= 1");
}

double kernel_eval(const KernelSpec& spec, std::span<const double> a,
                   std::span<const double> b) {
  spec.validate();
  if (a.size() != b.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  switch (spec.kind) {
    case KernelKind::rbf: {
      double d2 = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
      }
      return std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
    }
    case KernelKind::polynomial: {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      return std::pow(dot + 1.0, spec.degree);
    }
    case KernelKind::linear: {
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      return dot;
    }
  }
  throw std::invalid_argument("kernel_eval: unknown kernel kind");
}

Scaler Scaler::fit(std::span<const LabeledPoint> points) {
  Scaler s;
  if (points.empty()) return s;
  Features lo{points[0].x}, hi{points[0].x};
  for (const auto& p : points)
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], p.x[k]);
      hi[k] = std::max(hi[k], p.x[k]);
    }
  for (int k = 0; k < 2; ++k) {
    s.offset[k] = lo[k];
    const double range = hi[k] - lo[k];
    s.scale[k] = range > 0.0 ? 1.0 / range : 1.0;
  }
  return s;
}

Features Scaler::apply(const Features& x) const {
  return {(x[0] - offset[0]) * scale[0], (x[1] - offset[1]) * scale[1]};
}

void SvmModel::validate() const {
  if (support_vectors.empty())
    throw std::invalid_argument("SvmModel: no support vectors");
  if (support_vectors.size() != coeffs.size())
    throw std::invalid_argument("SvmModel: coeff/vector count mismatch");
  kernel.validate();
}

namespace {

double kernel_xy(const KernelSpec& spec, const Features& a,
                 const Features& b) {
  return kernel_eval(spec, std::span<const double>(a),
                     std::span<const double>(b));
}

struct SmoWorkspace {
  std::span<const LabeledPoint> data;
  std::vector<double> gram;  // n x n
  std::vector<double> alpha;
  std::vector<double> errors;  // f(x_i) - z_i
  double bias = 0.0;
  int n = 0;

  double k(int i, int j) const {
    return gram[static_cast<std::size_t>(i) * n + j];
  }
  double dual_objective() const {
    double obj = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      if (alpha[i] == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        if (alpha[j] == 0.0) continue;
        obj -= 0.5 * alpha[i] * alpha[j] * data[i].label * data[j].label *
               k(i, j);
      }
    }
    return obj;
  }
};

}  // namespace

SvmModel train_smo(std::span<const LabeledPoint> data,
                   const KernelSpec& spec, const SmoParams& params) {
  spec.validate();
  if (params.c <= 0.0 || params.tol <= 0.0)
    throw std::invalid_argument("train_smo: need C > 0 and tol > 0");
  const int n = static_cast<int>(data.size());
  int pos = 0, neg = 0;
  for (const auto& p : data) {
    if (!std::isfinite(p.x[0]) || !std::isfinite(p.x[1]))
      throw std::invalid_argument("train_smo: non-finite features");
    if (p.label == 1)
      ++pos;
    else if (p.label == -1)
      ++neg;
    else
      throw std::invalid_argument("train_smo: labels must be -1 or +1");
  }
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("train_smo: need both classes present");

  SmoWorkspace w;
  w.data = data;
  w.n = n;
  w.gram.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double kij = kernel_xy(spec, data[i].x, data[j].x);
      w.gram[static_cast<std::size_t>(i) * n + j] = kij;
      w.gram[static_cast<std::size_t>(j) * n + i] = kij;
    }
  w.alpha.assign(n, 0.0);
  w.errors.resize(n);
  for (int i = 0; i < n; ++i) w.errors[i] = -data[i].label;

  rng::SplitMix64 gen(params.seed);
  const double c = params.c;
  const double tol = params.tol;

  SvmModel model;
  model.kernel = spec;
  model.c = c;

  int passes_without_change = 0;
  int iterations = 0;
  while (passes_without_change < params.max_passes &&
         iterations < params.max_iterations) {
    ++iterations;
    int changed = 0;
    for (int i = 0; i < n; ++i) {
      const double zi = data[i].label;
      const double ei = w.errors[i];
      const bool violates = (zi * ei < -tol && w.alpha[i] < c) ||
                            (zi * ei > tol && w.alpha[i] > 0.0);
      if (!violates) continue;

      // Second choice: largest |E_i - E_j|, random fallback.
      int j = -1;
      double best = -1.0;
      for (int cand = 0; cand < n; ++cand) {
        if (cand == i) continue;
        const double gap = std::abs(ei - w.errors[cand]);
        if (gap > best) {
          best = gap;
          j = cand;
        }
      }
      if (j < 0 || best <= 0.0) {
        j = static_cast<int>(gen() % static_cast<std::uint64_t>(n));
        if (j == i) j = (j + 1) % n;
      }

      const double zj = data[j].label;
      const double ai_old = w.alpha[i];
      const double aj_old = w.alpha[j];
      double lo, hi;
      if (zi != zj) {
        lo = std::max(0.0, aj_old - ai_old);
        hi = std::min(c, c + aj_old - ai_old);
      } else {
        lo = std::max(0.0, ai_old + aj_old - c);
        hi = std::min(c, ai_old + aj_old);
      }
      if (lo >= hi) continue;
      const double eta = 2.0 * w.k(i, j) - w.k(i, i) - w.k(j, j);
      if (eta >= 0.0) continue;

      double aj = aj_old - zj * (ei - w.errors[j]) / eta;
      aj = std::clamp(aj, lo, hi);
      if (std::abs(aj - aj_old) < 1e-7) continue;
      const double ai = ai_old + zi * zj * (aj_old - aj);

      const double b1 = w.bias - ei - zi * (ai - ai_old) * w.k(i, i) -
                        zj * (aj - aj_old) * w.k(i, j);
      const double b2 = w.bias - w.errors[j] -
                        zi * (ai - ai_old) * w.k(i, j) -
                        zj * (aj - aj_old) * w.k(j, j);
      double b_new;
      if (ai > 0.0 && ai < c)
        b_new = b1;
      else if (aj > 0.0 && aj < c)
        b_new = b2;
      else
        b_new = 0.5 * (b1 + b2);

      const double delta_b = b_new - w.bias;
      for (int k = 0; k < n; ++k)
        w.errors[k] += zi * (ai - ai_old) * w.k(i, k) +
                       zj * (aj - aj_old) * w.k(j, k) + delta_b;
      w.alpha[i] = ai;
      w.alpha[j] = aj;
      w.bias = b_new;
      ++changed;
      if (params.record_objective_per_update)
        model.dual_objective_history.push_back(w.dual_objective());
    }
    if (!params.record_objective_per_update)
      model.dual_objective_history.push_back(w.dual_objective());
    passes_without_change = changed == 0 ? passes_without_change + 1 : 0;
  }

  model.bias = w.bias;
  double alpha_label_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    alpha_label_sum += w.alpha[i] * data[i].label;
    if (w.alpha[i] > 0.0) {
      model.support_vectors.push_back(data[i].x);
      model.coeffs.push_back(w.alpha[i] * data[i].label);
    }
  }
  model.alpha_label_sum = alpha_label_sum;

  double max_violation = 0.0;
  for (int i = 0; i < n; ++i) {
    const double margin = data[i].label * (w.errors[i] + data[i].label);
    if (w.alpha[i] <= 0.0)
      max_violation = std::max(max_violation, 1.0 - margin);
    else if (w.alpha[i] >= c)
      max_violation = std::max(max_violation, margin - 1.0);
    else
      max_violation = std::max(max_violation, std::abs(margin - 1.0));
  }
  model.max_kkt_violation = std::max(0.0, max_violation);
  model.converged = passes_without_change >= params.max_passes;

  model.validate();
  return model;
}

double decision_value(const SvmModel& model, const Features& x) {
  model.validate();
  double value = model.bias;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
    value +=
        model.coeffs[i] * kernel_xy(model.kernel, model.support_vectors[i], x);
  return value;
}

int classify(const SvmModel& model, const Features& x) {
  return decision_value(model, x) > 0.0 ? 1 : -1;
}

std::vector<LabeledPoint> undersample_majority(
    std::span<const LabeledPoint> points, double max_ratio,
    std::uint64_t seed) {
  std::vector<LabeledPoint> minority, majority;
  for (const auto& p : points)
    (p.label == 1 ? minority : majority).push_back(p);
  if (minority.size() > majority.size()) std::swap(minority, majority);
  const std::size_t cap = static_cast<std::size_t>(
      std::llround(max_ratio * static_cast<double>(minority.size())));
  if (majority.size() > cap && cap > 0) {
    rng::SplitMix64 gen(seed);
    // Fisher-Yates prefix shuffle, then truncate.
    for (std::size_t i = 0; i < cap; ++i) {
      const std::size_t j = i + gen() % (majority.size() - i);
      std::swap(majority[i], majority[j]);
    }
    majority.resize(cap);
  }
  std::vector<LabeledPoint> out;
  out.reserve(minority.size() + majority.size());
  out.insert(out.end(), minority.begin(), minority.end());
  out.insert(out.end(), majority.begin(), majority.end());
  return out;
}

namespace {
const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::polynomial: return "polynomial";
    case KernelKind::linear: return "linear";
  }
  return "rbf";
}

KernelKind kernel_from_name(const std::string& name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "polynomial") return KernelKind::polynomial;
  if (name == "linear") return KernelKind::linear;
  throw std::runtime_error("unknown kernel name: " + name);
}
}  // namespace

void save_model(const SvmModel& model, const Scaler& scaler,
                std::ostream& out) {
  model.validate();
  out.precision(17);
  out << "fugsim-svm-model v1\n";
  out << "kernel " << kernel_name(model.kernel.kind) << ' '
      << model.kernel.sigma << ' ' << model.kernel.degree << '\n';
  out << "c " << model.c << '\n';
  out << "bias " << model.bias << '\n';
  out << "scaler " << scaler.offset[0] << ' ' << scaler.offset[1] << ' '
      << scaler.scale[0] << ' ' << scaler.scale[1] << '\n';
  out << "support_vectors " << model.support_vectors.size() << '\n';
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
    out << model.coeffs[i] << ' ' << model.support_vectors[i][0] << ' '
        << model.support_vectors[i][1] << '\n';
}

std::pair<SvmModel, Scaler> load_model(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "fugsim-svm-model" || version != "v1")
    throw std::runtime_error("load_model: unrecognized model file header");
  SvmModel model;
  Scaler scaler;
  std::string key;
  while (in >> key) {
    if (key == "kernel") {
      std::string name;
      in >> name >> model.kernel.sigma >> model.kernel.degree;
      model.kernel.kind = kernel_from_name(name);
    } else if (key == "c") {
      in >> model.c;
    } else if (key == "bias") {
      in >> model.bias;
    } else if (key == "scaler") {
      in >> scaler.offset[0] >> scaler.offset[1] >> scaler.scale[0] >>
          scaler.scale[1];
    } else if (key == "support_vectors") {
      std::size_t count = 0;
      in >> count;
      model.support_vectors.resize(count);
      model.coeffs.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        in >> model.coeffs[i] >> model.support_vectors[i][0] >>
            model.support_vectors[i][1];
      break;
    } else {
      throw std::runtime_error("load_model: unexpected key " + key);
    }
  }
  if (!in) throw std::runtime_error("load_model: truncated model file");
  model.validate();
  return {model, scaler};
}

void save_model_file(const SvmModel& model, const Scaler& scaler,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  save_model(model, scaler, out);
}

std::pair<SvmModel, Scaler> load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  return load_model(in);
}

std::vector<LabeledPoint> load_dataset_csv(std::istream& in) {
  std::vector<LabeledPoint> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("x,", 0) == 0) continue;  // header
    std::istringstream row(line);
    LabeledPoint p;
    char comma = 0;
    if (!(row >> p.x[0] >> comma >> p.x[1] >> comma >> p.label))
      throw std::runtime_error("dataset csv: malformed line " +
                               std::to_string(line_no));
    points.push_back(p);
  }
  return points;
}

void write_dataset_csv(std::span<const LabeledPoint> points,
                       std::ostream& out) {
  out.precision(17);
  out << "x,y,label\n";
  for (const auto& p : points)
    out << p.x[0] << ',' << p.x[1] << ',' << p.label << '\n';
}

}  // namespace fugsim::svm
