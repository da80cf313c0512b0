#include "fugsim/lstm.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fugsim/random.hpp"

namespace fugsim::lstm {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

VectorXd sigmoid_vec(const VectorXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

VectorXd tanh_vec(const VectorXd& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

}  // namespace

LstmLayer LstmLayer::init(int input_size, int output_size,
                          std::uint64_t seed) {
  if (input_size <= 0 || output_size <= 0)
    throw std::invalid_argument("LstmLayer: sizes must be positive");
  LstmLayer layer;
  layer.input_size = input_size;
  layer.output_size = output_size;
  layer.w.resize(4 * output_size, input_size + output_size);
  layer.b = VectorXd::Zero(4 * output_size);
  rng::SplitMix64 gen(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(output_size));
  for (int r = 0; r < layer.w.rows(); ++r)
    for (int c = 0; c < layer.w.cols(); ++c)
      layer.w(r, c) = (2.0 * rng::uniform01(gen) - 1.0) * bound;
  // Forget-gate bias starts at 1 so early training keeps the carry open.
  layer.b.segment(output_size, output_size).setConstant(1.0);
  return layer;
}

long LstmLayer::parameter_count() const {
  return static_cast<long>(w.rows()) * w.cols() + b.size();
}

long param_count(long input_size, long output_size) {
  if (input_size < 0 || output_size < 0)
    throw std::invalid_argument("param_count: sizes must be >= 0");
  return 4 * (input_size + 1) * output_size + output_size * output_size;
}

LstmState LstmState::zero(int output_size) {
  return {VectorXd::Zero(output_size), VectorXd::Zero(output_size)};
}

std::pair<LstmState, CellCache> cell_forward(const LstmLayer& layer,
                                             const VectorXd& x,
                                             const LstmState& prev) {
  if (x.size() != layer.input_size ||
      prev.h.size() != layer.output_size ||
      prev.c.size() != layer.output_size)
    throw std::invalid_argument("cell_forward: dimension mismatch");
  if (!x.allFinite() || !prev.h.allFinite() || !prev.c.allFinite())
    throw std::runtime_error("cell_forward: non-finite inputs");

  const int o = layer.output_size;
  CellCache cache;
  cache.input.resize(layer.input_size + o);
  cache.input << x, prev.h;
  cache.c_prev = prev.c;

  const VectorXd z = layer.w * cache.input + layer.b;
  cache.gate_i = sigmoid_vec(z.segment(0, o));
  cache.gate_f = sigmoid_vec(z.segment(o, o));
  cache.gate_o = sigmoid_vec(z.segment(2 * o, o));
  cache.gate_g = tanh_vec(z.segment(3 * o, o));

  LstmState next;
  next.c = cache.gate_f.cwiseProduct(prev.c) +
           cache.gate_i.cwiseProduct(cache.gate_g);
  cache.c = next.c;
  cache.tanh_c = tanh_vec(next.c);
  next.h = cache.gate_o.cwiseProduct(cache.tanh_c);
  return {next, cache};
}

Network Network::make(int input_size, std::span<const int> hidden_sizes,
                      std::uint64_t seed) {
  if (hidden_sizes.empty())
    throw std::invalid_argument("Network: need at least one layer");
  Network net;
  int in = input_size;
  for (std::size_t l = 0; l < hidden_sizes.size(); ++l) {
    net.layers.push_back(
        LstmLayer::init(in, hidden_sizes[l], rng::mix64(seed + l)));
    in = hidden_sizes[l];
  }
  rng::SplitMix64 gen(rng::mix64(seed + hidden_sizes.size()));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  net.readout.w.resize(in);
  for (int i = 0; i < in; ++i)
    net.readout.w(i) = (2.0 * rng::uniform01(gen) - 1.0) * bound;
  net.readout.b = 0.0;
  return net;
}

long Network::parameter_count() const {
  long n = readout.w.size() + 1;
  for (const auto& layer : layers) n += layer.parameter_count();
  return n;
}

ForwardResult forward_sequence(const Network& net,
                               std::span<const VectorXd> window, Mode mode,
                               double dropout_rate, std::uint64_t seed) {
  if (window.empty())
    throw std::invalid_argument("forward_sequence: empty window");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("forward_sequence: dropout must be in [0,1)");

  const std::size_t steps = window.size();
  const std::size_t depth = net.layers.size();
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.cells.resize(steps);
  cache.dropout_masks.resize(steps);
  cache.top_output.resize(steps);
  cache.readout_pre_sigmoid.resize(steps);
  cache.dropout_rate = mode == Mode::train ? dropout_rate : 0.0;

  std::vector<LstmState> states;
  states.reserve(depth);
  for (const auto& layer : net.layers)
    states.push_back(LstmState::zero(layer.output_size));

  rng::SplitMix64 gen(seed);
  const double keep = 1.0 - cache.dropout_rate;

  for (std::size_t t = 0; t < steps; ++t) {
    cache.cells[t].resize(depth);
    cache.dropout_masks[t].resize(depth);
    VectorXd x = window[t];
    for (std::size_t l = 0; l < depth; ++l) {
      auto [next, cell] = cell_forward(net.layers[l], x, states[l]);
      states[l] = next;
      cache.cells[t][l] = std::move(cell);

      VectorXd mask = VectorXd::Ones(next.h.size());
      if (cache.dropout_rate > 0.0) {
        for (int i = 0; i < mask.size(); ++i)
          mask(i) = rng::uniform01(gen) < keep ? 1.0 / keep : 0.0;
      }
      cache.dropout_masks[t][l] = mask;
      x = next.h.cwiseProduct(mask);
    }
    cache.top_output[t] = x;
    const double pre = net.readout.w.dot(x) + net.readout.b;
    cache.readout_pre_sigmoid[t] = pre;
    result.outputs.push_back(sigmoid(pre));
  }
  cache.outputs = result.outputs;
  return result;
}

Gradients Gradients::zero_like(const Network& net) {
  Gradients g;
  for (const auto& layer : net.layers) {
    g.dw.push_back(MatrixXd::Zero(layer.w.rows(), layer.w.cols()));
    g.db.push_back(VectorXd::Zero(layer.b.size()));
  }
  g.readout_dw = VectorXd::Zero(net.readout.w.size());
  g.readout_db = 0.0;
  return g;
}

double Gradients::squared_norm() const {
  double n = readout_dw.squaredNorm() + readout_db * readout_db;
  for (const auto& m : dw) n += m.squaredNorm();
  for (const auto& v : db) n += v.squaredNorm();
  return n;
}

void Gradients::scale(double factor) {
  for (auto& m : dw) m *= factor;
  for (auto& v : db) v *= factor;
  readout_dw *= factor;
  readout_db *= factor;
}

double sequence_loss(std::span<const double> outputs,
                     std::span<const double> targets,
                     std::span<const double> step_weights) {
  if (outputs.size() != targets.size() ||
      outputs.size() != step_weights.size())
    throw std::invalid_argument("sequence_loss: length mismatch");
  double total_weight = 0.0;
  double loss = 0.0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const double r = outputs[t] - targets[t];
    loss += step_weights[t] * r * r;
    total_weight += step_weights[t];
  }
  if (total_weight <= 0.0)
    throw std::invalid_argument("sequence_loss: zero total step weight");
  return loss / total_weight;
}

Gradients backward_bptt(const Network& net, const ForwardCache& cache,
                        std::span<const double> targets,
                        std::span<const double> step_weights) {
  const std::size_t steps = cache.cells.size();
  const std::size_t depth = net.layers.size();
  if (targets.size() != steps || step_weights.size() != steps)
    throw std::logic_error("backward_bptt: cache/target shape mismatch");

  Gradients grads = Gradients::zero_like(net);

  double total_weight = 0.0;
  for (double w : step_weights) total_weight += w;
  if (total_weight <= 0.0)
    throw std::logic_error("backward_bptt: zero total step weight");

  // Running gradients flowing backward in time, per layer.
  std::vector<VectorXd> dh_next(depth), dc_next(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    dh_next[l] = VectorXd::Zero(net.layers[l].output_size);
    dc_next[l] = VectorXd::Zero(net.layers[l].output_size);
  }

  for (std::size_t ti = steps; ti-- > 0;) {
    // Readout head: L += w_t/(sum w) * (sigmoid(pre) - target)^2.
    const double y = cache.outputs[ti];
    const double dpre = (2.0 * step_weights[ti] / total_weight) *
                        (y - targets[ti]) * y * (1.0 - y);
    grads.readout_dw += dpre * cache.top_output[ti];
    grads.readout_db += dpre;

    VectorXd dx_above = dpre * net.readout.w;  // gradient wrt dropped h_top

    for (std::size_t li = depth; li-- > 0;) {
      const LstmLayer& layer = net.layers[li];
      const CellCache& cell = cache.cells[ti][li];
      const int o = layer.output_size;

      // dx_above is wrt mask.*h; undo the mask to get dh.
      VectorXd dh = dx_above.cwiseProduct(cache.dropout_masks[ti][li]) +
                    dh_next[li];

      const VectorXd do_ = dh.cwiseProduct(cell.tanh_c);
      VectorXd dc = dh.cwiseProduct(cell.gate_o)
                        .cwiseProduct(VectorXd::Ones(o) -
                                      cell.tanh_c.cwiseProduct(cell.tanh_c)) +
                    dc_next[li];
      const VectorXd df = dc.cwiseProduct(cell.c_prev);
      const VectorXd di = dc.cwiseProduct(cell.gate_g);
      const VectorXd dg = dc.cwiseProduct(cell.gate_i);

      VectorXd dz(4 * o);
      dz.segment(0, o) =
          di.cwiseProduct(cell.gate_i)
              .cwiseProduct(VectorXd::Ones(o) - cell.gate_i);
      dz.segment(o, o) =
          df.cwiseProduct(cell.gate_f)
              .cwiseProduct(VectorXd::Ones(o) - cell.gate_f);
      dz.segment(2 * o, o) =
          do_.cwiseProduct(cell.gate_o)
              .cwiseProduct(VectorXd::Ones(o) - cell.gate_o);
      dz.segment(3 * o, o) =
          dg.cwiseProduct(VectorXd::Ones(o) -
                          cell.gate_g.cwiseProduct(cell.gate_g));

      grads.dw[li].noalias() += dz * cell.input.transpose();
      grads.db[li] += dz;

      const VectorXd dinput = layer.w.transpose() * dz;
      dh_next[li] = dinput.tail(o);
      dc_next[li] = dc.cwiseProduct(cell.gate_f);
      dx_above = dinput.head(layer.input_size);
    }
  }
  return grads;
}

AdamState AdamState::zero_like(const Network& net) {
  return {Gradients::zero_like(net), Gradients::zero_like(net), 0};
}

namespace {

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, long t,
                 const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param -= ((cfg.learning_rate / m_corr) *
            (m.array() / ((v / v_corr).array().sqrt() + cfg.epsilon)))
               .matrix();
}

void adam_update_scalar(double& param, double grad, double& m, double& v,
                        long t, const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param -= (cfg.learning_rate / m_corr) * m /
           (std::sqrt(v / v_corr) + cfg.epsilon);
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  ++state.t;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    adam_update(net.layers[l].w, grads.dw[l], state.m.dw[l], state.v.dw[l],
                state.t, config);
    adam_update(net.layers[l].b, grads.db[l], state.m.db[l], state.v.db[l],
                state.t, config);
  }
  adam_update(net.readout.w, grads.readout_dw, state.m.readout_dw,
              state.v.readout_dw, state.t, config);
  adam_update_scalar(net.readout.b, grads.readout_db, state.m.readout_db,
                     state.v.readout_db, state.t, config);
}

std::vector<double> train(Network& net,
                          std::span<const std::vector<VectorXd>> windows,
                          std::span<const double> targets,
                          const TrainConfig& config) {
  if (windows.size() != targets.size())
    throw std::invalid_argument("train: window/target count mismatch");
  if (windows.empty()) throw std::invalid_argument("train: no windows");
  if (config.epochs < 1)
    throw std::invalid_argument("train: epochs must be >= 1");

  AdamState adam = AdamState::zero_like(net);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  rng::SplitMix64 gen(config.seed);

  std::vector<double> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[gen() % i]);

    double epoch_loss = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t idx = order[k];
      const auto& window = windows[idx];
      // Next-step forecasting: supervise the final step only.
      std::vector<double> step_targets(window.size(), 0.0);
      std::vector<double> step_weights(window.size(), 0.0);
      step_targets.back() = targets[idx];
      step_weights.back() = 1.0;

      auto fwd = forward_sequence(net, window, Mode::train,
                                  config.dropout_rate,
                                  rng::keyed_bits(config.seed, epoch, k, 7));
      const double loss =
          sequence_loss(fwd.outputs, step_targets, step_weights);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss diverged to non-finite");
      epoch_loss += loss;

      Gradients grads =
          backward_bptt(net, fwd.cache, step_targets, step_weights);
      const double norm = std::sqrt(grads.squared_norm());
      if (config.clip_norm > 0.0 && norm > config.clip_norm)
        grads.scale(config.clip_norm / norm);
      adam_step(net, grads, adam, config.adam);
    }
    history.push_back(epoch_loss / static_cast<double>(windows.size()));
  }
  return history;
}

void save_checkpoint(const Network& net, std::ostream& out) {
  out.precision(17);
  out << "fugsim-lstm-checkpoint v1\n";
  out << net.layers.size() << '\n';
  for (const auto& layer : net.layers) {
    out << layer.input_size << ' ' << layer.output_size << '\n';
    for (int r = 0; r < layer.w.rows(); ++r)
      for (int c = 0; c < layer.w.cols(); ++c)
        out << layer.w(r, c) << (c + 1 == layer.w.cols() ? '\n' : ' ');
    for (int i = 0; i < layer.b.size(); ++i)
      out << layer.b(i) << (i + 1 == layer.b.size() ? '\n' : ' ');
  }
  out << net.readout.w.size() << '\n';
  for (int i = 0; i < net.readout.w.size(); ++i)
    out << net.readout.w(i) << (i + 1 == net.readout.w.size() ? '\n' : ' ');
  out << net.readout.b << '\n';
}

Network load_checkpoint(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "fugsim-lstm-checkpoint" || version != "v1")
    throw std::runtime_error("load_checkpoint: unrecognized header");
  std::size_t depth = 0;
  in >> depth;
  Network net;
  for (std::size_t l = 0; l < depth; ++l) {
    LstmLayer layer;
    in >> layer.input_size >> layer.output_size;
    layer.w.resize(4 * layer.output_size,
                   layer.input_size + layer.output_size);
    layer.b.resize(4 * layer.output_size);
    for (int r = 0; r < layer.w.rows(); ++r)
      for (int c = 0; c < layer.w.cols(); ++c) in >> layer.w(r, c);
    for (int i = 0; i < layer.b.size(); ++i) in >> layer.b(i);
    net.layers.push_back(std::move(layer));
  }
  int readout_size = 0;
  in >> readout_size;
  net.readout.w.resize(readout_size);
  for (int i = 0; i < readout_size; ++i) in >> net.readout.w(i);
  in >> net.readout.b;
  if (!in) throw std::runtime_error("load_checkpoint: truncated file");
  return net;
}

void save_checkpoint_file(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  save_checkpoint(net, out);
}

Network load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  return load_checkpoint(in);
}

VectorXd rnn_reference_step(const MatrixXd& w_hh, const MatrixXd& w_xh,
                            const VectorXd& h_prev, const VectorXd& x) {
  return tanh_vec(w_hh * h_prev + w_xh * x);
}

}  // namespace fugsim::lstm
