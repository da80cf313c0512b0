#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fugsim::lstm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Gate weights stored as one (4*O) x (I+O) matrix acting on [x; h_prev],
// with bias 4*O. Row blocks in order: input, forget, output, candidate.
struct LstmLayer {
  MatrixXd w;
  VectorXd b;
  int input_size = 0;
  int output_size = 0;

  // Uniform [-1/sqrt(O), 1/sqrt(O)] weights, forget-gate bias 1.0.
  static LstmLayer init(int input_size, int output_size, std::uint64_t seed);
  long parameter_count() const;  // 4*O*(I+O) + 4*O, the constructed count
};

// Spatial-complexity diagnostic K = 4*(I+1)*O + O^2.
long param_count(long input_size, long output_size);

struct LstmState {
  VectorXd h;  // short-term memory
  VectorXd c;  // long-term memory

  static LstmState zero(int output_size);
};

struct CellCache {
  VectorXd input;  // [x; h_prev]
  VectorXd gate_i, gate_f, gate_o, gate_g;
  VectorXd c_prev, c, tanh_c;
};

// One LSTM step: gates from sigmoid/tanh of W [x; h_prev] + b,
// c = f.*c_prev + i.*g, h = o.*tanh(c).
std::pair<LstmState, CellCache> cell_forward(const LstmLayer& layer,
                                             const VectorXd& x,
                                             const LstmState& prev);

struct DenseReadout {
  VectorXd w;
  double b = 0.0;
};

struct Network {
  std::vector<LstmLayer> layers;
  DenseReadout readout;  // sigmoid head producing activity probability

  static Network make(int input_size, std::span<const int> hidden_sizes,
                      std::uint64_t seed);
  int input_size() const { return layers.front().input_size; }
  long parameter_count() const;
};

enum class Mode { train, infer };

struct ForwardCache {
  // cells[t][l]; dropout masks per (t, l) applied to layer l's output.
  std::vector<std::vector<CellCache>> cells;
  std::vector<std::vector<VectorXd>> dropout_masks;
  std::vector<VectorXd> top_output;  // post-dropout input to the readout
  std::vector<double> readout_pre_sigmoid;
  std::vector<double> outputs;
  double dropout_rate = 0.0;
};

struct ForwardResult {
  std::vector<double> outputs;  // one activity probability per step
  ForwardCache cache;
};

// Train mode applies inverted dropout to the layer outputs feeding
// upward; infer mode is deterministic and applies none.
ForwardResult forward_sequence(const Network& net,
                               std::span<const VectorXd> window, Mode mode,
                               double dropout_rate, std::uint64_t seed);

struct Gradients {
  std::vector<MatrixXd> dw;
  std::vector<VectorXd> db;
  VectorXd readout_dw;
  double readout_db = 0.0;

  static Gradients zero_like(const Network& net);
  double squared_norm() const;
  void scale(double factor);
};

// Mean of step_weights[t] * (output[t] - target[t])^2 over the window,
// normalized by the total step weight.
double sequence_loss(std::span<const double> outputs,
                     std::span<const double> targets,
                     std::span<const double> step_weights);

// Backpropagation through time over the cached forward pass; returns
// gradients of sequence_loss for every parameter.
Gradients backward_bptt(const Network& net, const ForwardCache& cache,
                        std::span<const double> targets,
                        std::span<const double> step_weights);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradients m, v;
  long t = 0;

  static AdamState zero_like(const Network& net);
};

// Bias-corrected Adam update, applied in place.
void adam_step(Network& net, const Gradients& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  int epochs = 50;
  double dropout_rate = 0.0;
  AdamConfig adam;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

// Per-window SGD with seeded shuffling; returns per-epoch mean loss.
// Aborts with std::runtime_error if the loss turns non-finite.
std::vector<double> train(Network& net,
                          std::span<const std::vector<VectorXd>> windows,
                          std::span<const double> targets,
                          const TrainConfig& config);

// Text checkpoint with a layer-shape header.
void save_checkpoint(const Network& net, std::ostream& out);
Network load_checkpoint(std::istream& in);
void save_checkpoint_file(const Network& net, const std::string& path);
Network load_checkpoint_file(const std::string& path);

// Plain-RNN reference step (tanh recurrence), forward only; used in
// unit tests as a contrast case.
VectorXd rnn_reference_step(const MatrixXd& w_hh, const MatrixXd& w_xh,
                            const VectorXd& h_prev, const VectorXd& x);

}  // namespace fugsim::lstm
