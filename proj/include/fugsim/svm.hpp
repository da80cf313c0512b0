#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fugsim::svm {

enum class KernelKind : std::uint8_t { rbf = 0, polynomial = 1, linear = 2 };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double sigma = 0.15;  // rbf bandwidth
  int degree = 3;       // polynomial degree

  void validate() const;
};

using Features = std::array<double, 2>;

struct LabeledPoint {
  Features x{0.0, 0.0};
  int label = -1;  // -1 = data-only, +1 = alarm-capable
};

double kernel_eval(const KernelSpec& spec, std::span<const double> a,
                   std::span<const double> b);

// Min-max rescaling of coordinates to the unit square, fit on the
// training set and applied to both splits.
struct Scaler {
  Features offset{0.0, 0.0};
  Features scale{1.0, 1.0};

  static Scaler fit(std::span<const LabeledPoint> points);
  Features apply(const Features& x) const;
};

struct SvmModel {
  std::vector<Features> support_vectors;
  std::vector<double> coeffs;  // alpha_i * z_i
  double bias = 0.0;
  KernelSpec kernel;
  double c = 10.0;

  // Convergence diagnostics from training.
  double alpha_label_sum = 0.0;
  double max_kkt_violation = 0.0;
  bool converged = false;
  std::vector<double> dual_objective_history;  // sampled once per pass

  void validate() const;  // a model without support vectors is rejected
};

struct SmoParams {
  double c = 10.0;
  double tol = 1e-3;
  int max_passes = 10;  // consecutive non-improving full sweeps
  int max_iterations = 2000;
  std::uint64_t seed = 1;
  bool record_objective_per_update = false;
};

// Soft-margin dual solved with two-coefficient SMO updates and a
// max-|E_i - E_j| second-choice heuristic. Throws std::invalid_argument
// on a single-class or non-finite dataset.
SvmModel train_smo(std::span<const LabeledPoint> data,
                   const KernelSpec& spec, const SmoParams& params);

double decision_value(const SvmModel& model, const Features& x);

// Sign of the decision value; an exact tie resolves to the data class.
int classify(const SvmModel& model, const Features& x);

// Random undersampling of the majority class down to max_ratio : 1.
std::vector<LabeledPoint> undersample_majority(
    std::span<const LabeledPoint> points, double max_ratio,
    std::uint64_t seed);

// Versioned flat-file model format; the scaler travels with the model.
void save_model(const SvmModel& model, const Scaler& scaler,
                std::ostream& out);
std::pair<SvmModel, Scaler> load_model(std::istream& in);
void save_model_file(const SvmModel& model, const Scaler& scaler,
                     const std::string& path);
std::pair<SvmModel, Scaler> load_model_file(const std::string& path);

// CSV dataset format x,y,label with label in {-1, +1}.
std::vector<LabeledPoint> load_dataset_csv(std::istream& in);
void write_dataset_csv(std::span<const LabeledPoint> points,
                       std::ostream& out);

}  // namespace fugsim::svm
