#include "csipred/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"

namespace csipred {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::size_t gate_count(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::gru: return 3;
    case PredictorKind::lstm: return 4;
    default: return 0;
  }
}

// Offsets of every block in the flat parameter vector.
struct Layout {
  std::size_t p = 0, d = 0, out = 0;
  // dnn
  std::size_t w1 = 0, b1 = 0;
  // recurrent gates
  std::size_t u[4] = {0, 0, 0, 0};
  std::size_t w[4] = {0, 0, 0, 0};
  std::size_t b[4] = {0, 0, 0, 0};
  std::size_t wout = 0, bout = 0;
  std::size_t total = 0;
};

Layout layout_of(PredictorKind kind, std::size_t p, std::size_t d, std::size_t out) {
  Layout l;
  l.p = p;
  l.d = d;
  l.out = out;
  std::size_t at = 0;
  if (kind == PredictorKind::dnn) {
    l.w1 = at; at += d * p;
    l.b1 = at; at += d;
    l.wout = at; at += out * d;
    l.bout = at; at += out;
  } else if (kind == PredictorKind::gru || kind == PredictorKind::lstm) {
    for (std::size_t g = 0; g < gate_count(kind); ++g) {
      l.u[g] = at; at += d;
      l.w[g] = at; at += d * d;
      l.b[g] = at; at += d;
    }
    l.wout = at; at += out * d;
    l.bout = at; at += out;
  } else {
    throw std::domain_error("kind '" + to_string(kind) + "' has no parameters");
  }
  l.total = at;
  return l;
}

void check_model(const NeuralModel& m) {
  const Layout l = layout_of(m.kind, m.input_len, m.hidden, m.output_len);
  if (m.params.size() != l.total)
    throw std::domain_error("parameter vector has " + std::to_string(m.params.size()) +
                            " entries, expected " + std::to_string(l.total));
}

// y += W x for row-major W [rows x cols].
inline void matvec_acc(const double* w, const double* x, std::size_t rows,
                       std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

// y += W' x for row-major W [rows x cols]; x has rows entries, y has cols.
inline void matvec_t_acc(const double* w, const double* x, std::size_t rows,
                         std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += wr[c] * xr;
  }
}

// FLOPs tally hooks. NoTally compiles to nothing in the training path.
struct NoTally {
  void matvec(std::size_t, std::size_t) {}
  void input_gate(std::size_t) {}
  void elementwise(std::size_t) {}
};

struct FlopTally {
  std::uint64_t flops = 0;
  void matvec(std::size_t rows, std::size_t cols) { flops += 2ull * rows * cols; }
  void input_gate(std::size_t d) { flops += 2ull * d; }
  void elementwise(std::size_t n) { flops += n; }
};

// Per-sample forward caches sized once and reused across a batch.
struct Cache {
  std::vector<double> x;       // window oldest first [P]
  std::vector<double> h;       // [(P+1) x D], h[0] = 0
  std::vector<double> c;       // lstm cell states [(P+1) x D]
  std::vector<double> gates;   // [P x n_gates x D], post-activation
  std::vector<double> rh;      // gru r*h_prev per step [P x D]
  std::vector<double> hidden;  // dnn tanh activations [D]
  std::vector<double> y;       // [out]
  // backward scratch, reused across samples
  std::vector<double> dh, dc, da, tmp, dh_prev, ga, gb;

  void resize(const NeuralModel& m) {
    const std::size_t p = m.input_len, d = m.hidden;
    x.assign(p, 0.0);
    y.assign(m.output_len, 0.0);
    dh.assign(d, 0.0);
    dc.assign(d, 0.0);
    da.assign(d, 0.0);
    tmp.assign(d, 0.0);
    dh_prev.assign(d, 0.0);
    ga.assign(d, 0.0);
    gb.assign(d, 0.0);
    if (m.kind == PredictorKind::dnn) {
      hidden.assign(d, 0.0);
      return;
    }
    h.assign((p + 1) * d, 0.0);
    gates.assign(p * gate_count(m.kind) * d, 0.0);
    if (m.kind == PredictorKind::lstm) c.assign((p + 1) * d, 0.0);
    if (m.kind == PredictorKind::gru) rh.assign(p * d, 0.0);
  }
};

template <class Tally>
void forward_sample(const NeuralModel& m, const Layout& l, std::span<const double> window,
                    Cache& cache, Tally& tally) {
  const std::size_t p = l.p, d = l.d, out = l.out;
  const double* par = m.params.data();

  // Recurrent kinds consume the window oldest first.
  for (std::size_t i = 0; i < p; ++i) cache.x[i] = window[p - 1 - i];

  if (m.kind == PredictorKind::dnn) {
    for (std::size_t r = 0; r < d; ++r) {
      double acc = par[l.b1 + r];
      const double* wr = par + l.w1 + r * p;
      // The dense window keeps the batch ordering; the map is order-agnostic.
      for (std::size_t i = 0; i < p; ++i) acc += wr[i] * window[i];
      cache.hidden[r] = std::tanh(acc);
    }
    tally.matvec(d, p);
    std::fill(cache.y.begin(), cache.y.end(), 0.0);
    for (std::size_t r = 0; r < out; ++r) cache.y[r] = par[l.bout + r];
    matvec_acc(par + l.wout, cache.hidden.data(), out, d, cache.y.data());
    tally.matvec(out, d);
    return;
  }

  const std::size_t ng = gate_count(m.kind);
  std::fill(cache.h.begin(), cache.h.end(), 0.0);
  if (m.kind == PredictorKind::lstm) std::fill(cache.c.begin(), cache.c.end(), 0.0);

  for (std::size_t t = 0; t < p; ++t) {
    const double xt = cache.x[t];
    const double* h_prev = cache.h.data() + t * d;
    double* h_next = cache.h.data() + (t + 1) * d;
    double* gates = cache.gates.data() + t * ng * d;

    // Pre-activations a_g = U_g x_t + W_g h_prev + b_g (candidate gate of the
    // GRU uses r*h_prev instead of h_prev).
    for (std::size_t g = 0; g < ng; ++g) {
      double* a = gates + g * d;
      for (std::size_t r = 0; r < d; ++r) a[r] = par[l.u[g] + r] * xt + par[l.b[g] + r];
      tally.input_gate(d);
    }

    if (m.kind == PredictorKind::gru) {
      double* z = gates;           // update gate
      double* rg = gates + d;      // reset gate
      double* cand = gates + 2 * d;
      matvec_acc(par + l.w[0], h_prev, d, d, z);
      tally.matvec(d, d);
      matvec_acc(par + l.w[1], h_prev, d, d, rg);
      tally.matvec(d, d);
      for (std::size_t r = 0; r < d; ++r) {
        z[r] = sigmoid(z[r]);
        rg[r] = sigmoid(rg[r]);
      }
      double* rh = cache.rh.data() + t * d;
      for (std::size_t r = 0; r < d; ++r) rh[r] = rg[r] * h_prev[r];
      tally.elementwise(d);
      matvec_acc(par + l.w[2], rh, d, d, cand);
      tally.matvec(d, d);
      for (std::size_t r = 0; r < d; ++r) cand[r] = std::tanh(cand[r]);
      // h = (1-z) h_prev + z cand
      for (std::size_t r = 0; r < d; ++r)
        h_next[r] = (1.0 - z[r]) * h_prev[r] + z[r] * cand[r];
      tally.elementwise(d);  // 1 - z
      tally.elementwise(d);  // (1-z) * h_prev
      tally.elementwise(d);  // z * cand
      tally.elementwise(d);  // sum
    } else {
      double* ig = gates;
      double* fg = gates + d;
      double* gg = gates + 2 * d;  // candidate
      double* og = gates + 3 * d;
      for (std::size_t g = 0; g < ng; ++g) {
        matvec_acc(par + l.w[g], h_prev, d, d, gates + g * d);
        tally.matvec(d, d);
      }
      const double* c_prev = cache.c.data() + t * d;
      double* c_next = cache.c.data() + (t + 1) * d;
      for (std::size_t r = 0; r < d; ++r) {
        ig[r] = sigmoid(ig[r]);
        fg[r] = sigmoid(fg[r]);
        gg[r] = std::tanh(gg[r]);
        og[r] = sigmoid(og[r]);
        c_next[r] = fg[r] * c_prev[r] + ig[r] * gg[r];
        h_next[r] = og[r] * std::tanh(c_next[r]);
      }
      tally.elementwise(d);  // f * c_prev
      tally.elementwise(d);  // i * g
      tally.elementwise(d);  // sum
      tally.elementwise(d);  // o * tanh(c)
    }
  }

  const double* h_last = cache.h.data() + p * d;
  for (std::size_t r = 0; r < out; ++r) cache.y[r] = par[l.bout + r];
  matvec_acc(par + l.wout, h_last, out, d, cache.y.data());
  tally.matvec(out, d);
}

// Reverse pass for one sample. dy holds dL/dy; gradient sums accumulate into
// grad (same layout as params). Scratch lives in the cache.
void backward_sample(const NeuralModel& m, const Layout& l, std::span<const double> window,
                     Cache& cache, std::span<const double> dy, double* grad) {
  const std::size_t p = l.p, d = l.d, out = l.out;
  const double* par = m.params.data();

  if (m.kind == PredictorKind::dnn) {
    std::vector<double>& dh = cache.dh;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      grad[l.bout + r] += dy[r];
      double* gw = grad + l.wout + r * d;
      for (std::size_t cidx = 0; cidx < d; ++cidx) gw[cidx] += dy[r] * cache.hidden[cidx];
    }
    matvec_t_acc(par + l.wout, dy.data(), out, d, dh.data());
    for (std::size_t r = 0; r < d; ++r) {
      const double da = dh[r] * (1.0 - cache.hidden[r] * cache.hidden[r]);
      grad[l.b1 + r] += da;
      double* gw = grad + l.w1 + r * p;
      for (std::size_t i = 0; i < p; ++i) gw[i] += da * window[i];
    }
    return;
  }

  const std::size_t ng = gate_count(m.kind);
  std::vector<double>& dh = cache.dh;
  std::vector<double>& dc = cache.dc;
  std::vector<double>& da = cache.da;
  std::vector<double>& tmp = cache.tmp;
  std::vector<double>& dh_prev = cache.dh_prev;
  std::fill(dh.begin(), dh.end(), 0.0);
  std::fill(dc.begin(), dc.end(), 0.0);

  const double* h_last = cache.h.data() + p * d;
  for (std::size_t r = 0; r < out; ++r) {
    grad[l.bout + r] += dy[r];
    double* gw = grad + l.wout + r * d;
    for (std::size_t cidx = 0; cidx < d; ++cidx) gw[cidx] += dy[r] * h_last[cidx];
  }
  matvec_t_acc(par + l.wout, dy.data(), out, d, dh.data());

  for (std::size_t ti = p; ti-- > 0;) {
    const double xt = cache.x[ti];
    const double* h_prev = cache.h.data() + ti * d;
    const double* gates = cache.gates.data() + ti * ng * d;
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);

    auto push_gate = [&](std::size_t g, const double* dact) {
      // dact = dL/da_g (pre-activation). Accumulates U, W, b grads and the
      // h_prev contribution through W_g.
      for (std::size_t r = 0; r < d; ++r) {
        grad[l.u[g] + r] += dact[r] * xt;
        grad[l.b[g] + r] += dact[r];
      }
      const double* hin = (m.kind == PredictorKind::gru && g == 2)
                              ? cache.rh.data() + ti * d
                              : h_prev;
      for (std::size_t r = 0; r < d; ++r) {
        double* gw = grad + l.w[g] + r * d;
        const double dr = dact[r];
        for (std::size_t cidx = 0; cidx < d; ++cidx) gw[cidx] += dr * hin[cidx];
      }
    };

    if (m.kind == PredictorKind::gru) {
      const double* z = gates;
      const double* rg = gates + d;
      const double* cand = gates + 2 * d;

      // h = (1-z) h_prev + z cand
      std::vector<double>& dz = cache.ga;
      std::vector<double>& dcand = cache.gb;
      for (std::size_t r = 0; r < d; ++r) {
        dz[r] = dh[r] * (cand[r] - h_prev[r]);
        dcand[r] = dh[r] * z[r];
        dh_prev[r] += dh[r] * (1.0 - z[r]);
      }

      // candidate: cand = tanh(a_c), a_c = U x + W (r*h_prev) + b
      for (std::size_t r = 0; r < d; ++r) da[r] = dcand[r] * (1.0 - cand[r] * cand[r]);
      push_gate(2, da.data());
      std::fill(tmp.begin(), tmp.end(), 0.0);
      matvec_t_acc(par + l.w[2], da.data(), d, d, tmp.data());  // d(r*h_prev)
      std::vector<double>& dr = cache.gb;  // dcand no longer needed
      for (std::size_t r = 0; r < d; ++r) {
        dr[r] = tmp[r] * h_prev[r];
        dh_prev[r] += tmp[r] * rg[r];
      }

      // update gate
      for (std::size_t r = 0; r < d; ++r) da[r] = dz[r] * z[r] * (1.0 - z[r]);
      push_gate(0, da.data());
      matvec_t_acc(par + l.w[0], da.data(), d, d, dh_prev.data());

      // reset gate
      for (std::size_t r = 0; r < d; ++r) da[r] = dr[r] * rg[r] * (1.0 - rg[r]);
      push_gate(1, da.data());
      matvec_t_acc(par + l.w[1], da.data(), d, d, dh_prev.data());
    } else {
      const double* ig = gates;
      const double* fg = gates + d;
      const double* gg = gates + 2 * d;
      const double* og = gates + 3 * d;
      const double* c_prev = cache.c.data() + ti * d;
      const double* c_next = cache.c.data() + (ti + 1) * d;

      std::vector<double>& dc_prev = cache.ga;
      for (std::size_t r = 0; r < d; ++r) {
        const double tc = std::tanh(c_next[r]);
        const double dct = dc[r] + dh[r] * og[r] * (1.0 - tc * tc);
        // output gate
        da[r] = dh[r] * tc * og[r] * (1.0 - og[r]);
        tmp[r] = dct;  // stash dL/dc_next
        dc_prev[r] = dct * fg[r];
      }
      push_gate(3, da.data());
      matvec_t_acc(par + l.w[3], da.data(), d, d, dh_prev.data());

      for (std::size_t r = 0; r < d; ++r) da[r] = tmp[r] * gg[r] * ig[r] * (1.0 - ig[r]);
      push_gate(0, da.data());
      matvec_t_acc(par + l.w[0], da.data(), d, d, dh_prev.data());

      for (std::size_t r = 0; r < d; ++r) da[r] = tmp[r] * c_prev[r] * fg[r] * (1.0 - fg[r]);
      push_gate(1, da.data());
      matvec_t_acc(par + l.w[1], da.data(), d, d, dh_prev.data());

      for (std::size_t r = 0; r < d; ++r) da[r] = tmp[r] * ig[r] * (1.0 - gg[r] * gg[r]);
      push_gate(2, da.data());
      matvec_t_acc(par + l.w[2], da.data(), d, d, dh_prev.data());

      dc = dc_prev;
    }
    dh = dh_prev;
  }
}

std::span<const double> target_row(const PredictionBatch& batch, std::size_t out,
                                   std::size_t row) {
  if (out == batch.t_csi - 1)
    return batch.tdd_target_row(row);
  if (out == 1) {
    if (batch.targets_fdd.size() != batch.n_windows())
      throw std::domain_error("batch lacks FDD targets for a scalar-output model");
    return {batch.targets_fdd.data() + row, 1};
  }
  throw std::domain_error("model output length " + std::to_string(out) +
                          " matches neither t_csi-1 nor 1");
}

}  // namespace

std::size_t neural_param_count(PredictorKind kind, std::size_t input_len,
                               std::size_t hidden, std::size_t output_len) {
  return layout_of(kind, input_len, hidden, output_len).total;
}

NeuralModel init_model(PredictorKind kind, std::size_t input_len, std::size_t hidden,
                       std::size_t output_len, std::uint64_t seed) {
  if (input_len < 1 || hidden < 1 || output_len < 1)
    throw std::invalid_argument("model dimensions must be >= 1");
  const Layout l = layout_of(kind, input_len, hidden, output_len);

  NeuralModel m;
  m.kind = kind;
  m.input_len = input_len;
  m.hidden = hidden;
  m.output_len = output_len;
  m.seed = seed;
  m.params.assign(l.total, 0.0);

  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::size_t at, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) m.params[at + i] = dist(rng);
  };

  if (kind == PredictorKind::dnn) {
    fill_uniform(l.w1, hidden * input_len, input_len);
    fill_uniform(l.wout, output_len * hidden, hidden);
  } else {
    for (std::size_t g = 0; g < gate_count(kind); ++g) {
      fill_uniform(l.u[g], hidden, 1);
      fill_uniform(l.w[g], hidden * hidden, hidden);
    }
    fill_uniform(l.wout, output_len * hidden, hidden);
  }
  return m;
}

std::vector<double> forward(const NeuralModel& model, std::span<const double> window) {
  check_model(model);
  if (window.size() != model.input_len)
    throw std::domain_error("window length " + std::to_string(window.size()) +
                            " does not match model input length " +
                            std::to_string(model.input_len));
  const Layout l = layout_of(model.kind, model.input_len, model.hidden, model.output_len);
  Cache cache;
  cache.resize(model);
  NoTally tally;
  forward_sample(model, l, window, cache, tally);
  return cache.y;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw std::domain_error("prediction/target shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    acc += e * e;
  }
  return acc / static_cast<double>(predictions.size());
}

double batch_loss(const NeuralModel& model, const PredictionBatch& batch) {
  check_model(model);
  if (batch.n_windows() == 0) throw std::domain_error("empty batch");
  if (batch.input_len != model.input_len)
    throw std::domain_error("batch input length does not match the model");
  const Layout l = layout_of(model.kind, model.input_len, model.hidden, model.output_len);
  Cache cache;
  cache.resize(model);
  NoTally tally;
  double acc = 0.0;
  for (std::size_t r = 0; r < batch.n_windows(); ++r) {
    forward_sample(model, l, batch.input_row(r), cache, tally);
    acc += mse_loss(cache.y, target_row(batch, model.output_len, r));
  }
  return acc / static_cast<double>(batch.n_windows());
}

namespace {

// Shared by gradients() and train(): mean-loss gradient over the given rows.
double gradient_over_rows(const NeuralModel& model, const Layout& l,
                          const PredictionBatch& batch, std::span<const std::size_t> rows,
                          Cache& cache, std::vector<double>& grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> dy(model.output_len);
  NoTally tally;
  double loss_acc = 0.0;
  for (std::size_t row : rows) {
    const auto window = batch.input_row(row);
    forward_sample(model, l, window, cache, tally);
    const auto target = target_row(batch, model.output_len, row);
    double sample_loss = 0.0;
    for (std::size_t i = 0; i < model.output_len; ++i) {
      const double e = cache.y[i] - target[i];
      sample_loss += e * e;
      dy[i] = 2.0 * e / static_cast<double>(model.output_len);
    }
    loss_acc += sample_loss / static_cast<double>(model.output_len);
    backward_sample(model, l, window, cache, dy, grad.data());
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (double& g : grad) g *= inv_n;
  return loss_acc * inv_n;
}

}  // namespace

std::vector<double> gradients(const NeuralModel& model, const PredictionBatch& batch) {
  check_model(model);
  if (batch.n_windows() == 0) throw std::domain_error("empty batch");
  if (batch.input_len != model.input_len)
    throw std::domain_error("batch input length does not match the model");
  const Layout l = layout_of(model.kind, model.input_len, model.hidden, model.output_len);
  Cache cache;
  cache.resize(model);
  std::vector<std::size_t> rows(batch.n_windows());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> grad(model.n_params());
  gradient_over_rows(model, l, batch, rows, cache, grad);
  for (double g : grad)
    if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient encountered");
  return grad;
}

TrainResult train(const NeuralModel& model, const PredictionBatch& train_set,
                  const PredictionBatch& val_set, const TrainConfig& config) {
  check_model(model);
  if (train_set.n_windows() == 0) throw std::invalid_argument("empty training set");
  if (val_set.n_windows() == 0) throw std::invalid_argument("empty validation set");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");

  const Layout l = layout_of(model.kind, model.input_len, model.hidden, model.output_len);
  NeuralModel current = model;
  Cache cache;
  cache.resize(model);

  const std::size_t n_par = current.n_params();
  std::vector<double> grad(n_par), m1(n_par, 0.0), m2(n_par, 0.0);
  std::size_t adam_t = 0;

  std::vector<std::size_t> order(train_set.n_windows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.shuffle_seed);

  TrainResult result;
  result.model = current;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      const double loss = gradient_over_rows(current, l, train_set, rows, cache, grad);
      epoch_loss += loss * static_cast<double>(len);
      seen += len;

      ++adam_t;
      const double corr1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam_t));
      const double corr2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam_t));
      for (std::size_t i = 0; i < n_par; ++i) {
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * grad[i];
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        current.params[i] -= config.learning_rate * (m1[i] / corr1) /
                             (std::sqrt(m2[i] / corr2) + config.epsilon);
      }
    }
    epoch_loss /= static_cast<double>(seen);
    const double val = batch_loss(current, val_set);
    if (!std::isfinite(epoch_loss) || !std::isfinite(val)) {
      std::ostringstream ss;
      ss << "training diverged (non-finite loss) at epoch " << epoch;
      throw std::runtime_error(ss.str());
    }
    result.train_loss.push_back(epoch_loss);
    result.val_loss.push_back(val);

    if (val < best_val) {
      best_val = val;
      result.model = current;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

std::uint64_t count_forward_flops(const NeuralModel& model) {
  check_model(model);
  const Layout l = layout_of(model.kind, model.input_len, model.hidden, model.output_len);
  Cache cache;
  cache.resize(model);
  FlopTally tally;
  const std::vector<double> window(model.input_len, 0.25);
  forward_sample(model, l, window, cache, tally);
  return tally.flops;
}

void save_checkpoint(const NeuralModel& model, const std::string& path) {
  check_model(model);
  std::string out = "csipred-model v1\n";
  out += "kind " + to_string(model.kind) + "\n";
  out += "input_len " + std::to_string(model.input_len) + "\n";
  out += "hidden " + std::to_string(model.hidden) + "\n";
  out += "output_len " + std::to_string(model.output_len) + "\n";
  out += "seed " + std::to_string(model.seed) + "\n";
  out += "params " + std::to_string(model.n_params()) + "\n";
  for (double v : model.params) out += format_double(v) + "\n";
  write_file_atomic(path, out);
}

NeuralModel load_checkpoint(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  if (header != "csipred-model v1")
    throw std::runtime_error("not a model checkpoint: " + path);

  NeuralModel m;
  std::string key, kind;
  std::size_t n_par = 0;
  in >> key >> kind;
  if (key != "kind") throw std::runtime_error("malformed checkpoint: " + path);
  m.kind = predictor_kind_from_string(kind);
  in >> key >> m.input_len;
  if (key != "input_len") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> m.hidden;
  if (key != "hidden") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> m.output_len;
  if (key != "output_len") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> m.seed;
  if (key != "seed") throw std::runtime_error("malformed checkpoint: " + path);
  in >> key >> n_par;
  if (key != "params") throw std::runtime_error("malformed checkpoint: " + path);
  m.params.resize(n_par);
  for (std::size_t i = 0; i < n_par; ++i) in >> m.params[i];
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  check_model(m);
  return m;
}

void write_loss_history_csv(const TrainResult& result, const std::string& path,
                            std::uint64_t config_hash, std::uint64_t seed) {
  std::string out = csv_comment(config_hash, seed) + "\n";
  out += "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(result.train_loss[e]) + "," +
           format_double(result.val_loss[e]) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace csipred
