#include "exosim/grf_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "exosim/csvio.hpp"
#include "exosim/parallel.hpp"
#include "exosim/util.hpp"

namespace exosim::grf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable binary cross-entropy on a logit.
double bce(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

MatrixXd orthogonal_block(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  return q;
}

MatrixXd uniform_matrix(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

LstmCell init_cell(const NetSizes& s, std::mt19937_64& rng) {
  LstmCell c;
  const double bound = 1.0 / std::sqrt(static_cast<double>(s.input));
  c.wx = uniform_matrix(4 * s.hidden, s.input, bound, rng);
  c.wh = MatrixXd(4 * s.hidden, s.hidden);
  for (int g = 0; g < 4; ++g) {
    c.wh.middleRows(g * s.hidden, s.hidden) = orthogonal_block(s.hidden, rng);
  }
  c.b = VectorXd::Zero(4 * s.hidden);
  c.b.segment(s.hidden, s.hidden).setOnes();  // forget-gate bias +1
  return c;
}

// Per-direction activations kept for backpropagation through time.
struct LstmTrace {
  std::vector<MatrixXd> i, f, g, o, c;  // window_len entries, hidden x n
  std::vector<MatrixXd> h;              // window_len + 1, h[0] = 0
};

// One LSTM direction over the standardized steps x[0..L-1] (already in the
// direction's reading order). Returns the final hidden state.
MatrixXd lstm_run(const LstmCell& cell, const std::vector<MatrixXd>& x, int hidden,
                  LstmTrace* trace) {
  const int L = static_cast<int>(x.size());
  const auto n = x[0].cols();
  MatrixXd h = MatrixXd::Zero(hidden, n);
  MatrixXd c = MatrixXd::Zero(hidden, n);
  if (trace) {
    trace->i.resize(L);
    trace->f.resize(L);
    trace->g.resize(L);
    trace->o.resize(L);
    trace->c.resize(L);
    trace->h.resize(L + 1);
    trace->h[0] = h;
  }
  for (int t = 0; t < L; ++t) {
    MatrixXd z = cell.wx * x[static_cast<std::size_t>(t)] + cell.wh * h;
    z.colwise() += cell.b;
    MatrixXd gi = z.topRows(hidden).unaryExpr([](double v) { return sigmoid(v); });
    MatrixXd gf =
        z.middleRows(hidden, hidden).unaryExpr([](double v) { return sigmoid(v); });
    MatrixXd gg = z.middleRows(2 * hidden, hidden).array().tanh().matrix();
    MatrixXd go =
        z.bottomRows(hidden).unaryExpr([](double v) { return sigmoid(v); });
    c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
    h = go.cwiseProduct(c.array().tanh().matrix());
    if (trace) {
      auto ti = static_cast<std::size_t>(t);
      trace->i[ti] = std::move(gi);
      trace->f[ti] = std::move(gf);
      trace->g[ti] = std::move(gg);
      trace->o[ti] = std::move(go);
      trace->c[ti] = c;
      trace->h[ti + 1] = h;
    }
  }
  return h;
}

// Backward pass for one direction; dh_final arrives from the projection.
// Accumulates into the cell gradient and returns nothing (input gradients
// are not needed).
void lstm_backward(const LstmCell& cell, const std::vector<MatrixXd>& x,
                   const LstmTrace& tr, int hidden, const MatrixXd& dh_final,
                   LstmCell& grad) {
  const int L = static_cast<int>(x.size());
  MatrixXd dh = dh_final;
  MatrixXd dc = MatrixXd::Zero(dh.rows(), dh.cols());
  for (int t = L - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const MatrixXd tanh_c = tr.c[ti].array().tanh().matrix();
    const MatrixXd d_o = dh.cwiseProduct(tanh_c);
    dc += dh.cwiseProduct(tr.o[ti])
              .cwiseProduct((1.0 - tanh_c.array().square()).matrix());
    const MatrixXd c_prev =
        t > 0 ? tr.c[ti - 1] : MatrixXd::Zero(dh.rows(), dh.cols()).eval();
    const MatrixXd d_i = dc.cwiseProduct(tr.g[ti]);
    const MatrixXd d_f = dc.cwiseProduct(c_prev);
    const MatrixXd d_g = dc.cwiseProduct(tr.i[ti]);

    MatrixXd dz(4 * hidden, dh.cols());
    dz.topRows(hidden) =
        d_i.cwiseProduct(tr.i[ti]).cwiseProduct((1.0 - tr.i[ti].array()).matrix());
    dz.middleRows(hidden, hidden) =
        d_f.cwiseProduct(tr.f[ti]).cwiseProduct((1.0 - tr.f[ti].array()).matrix());
    dz.middleRows(2 * hidden, hidden) =
        d_g.cwiseProduct((1.0 - tr.g[ti].array().square()).matrix());
    dz.bottomRows(hidden) =
        d_o.cwiseProduct(tr.o[ti]).cwiseProduct((1.0 - tr.o[ti].array()).matrix());

    grad.wx += dz * x[ti].transpose();
    grad.wh += dz * tr.h[ti].transpose();
    grad.b += dz.rowwise().sum();

    dh = cell.wh.transpose() * dz;
    dc = dc.cwiseProduct(tr.f[ti]);
  }
}

struct ForwardCache {
  std::vector<MatrixXd> xs;      // standardized steps, forward reading order
  std::vector<MatrixXd> xs_rev;  // reversed reading order
  LstmTrace fwd, bwd;
  MatrixXd concat;  // 2h x n
  MatrixXd proj;    // proj x n
  MatrixXd a1, a2;  // MLP activations
  MatrixXd fused;   // proj x n
  MatrixXd y;       // 3 x n
};

void forward_chunk(const NetParams& p, const std::vector<MatrixXd>& windows,
                   const std::size_t* idx, std::size_t n, ForwardCache& cache,
                   bool keep_traces) {
  const auto& s = p.sizes;
  const int L = s.window;
  VectorXd inv_std(s.input);
  for (int c = 0; c < s.input; ++c) {
    inv_std[c] = p.feat_std[c] < 1e-12 ? 0.0 : 1.0 / p.feat_std[c];
  }

  cache.xs.assign(static_cast<std::size_t>(L), MatrixXd(s.input, static_cast<Eigen::Index>(n)));
  for (int t = 0; t < L; ++t) {
    auto& xt = cache.xs[static_cast<std::size_t>(t)];
    for (std::size_t b = 0; b < n; ++b) {
      const MatrixXd& w = windows[idx[b]];
      xt.col(static_cast<Eigen::Index>(b)) =
          (w.col(t) - p.feat_mean).cwiseProduct(inv_std);
    }
  }
  cache.xs_rev.assign(cache.xs.rbegin(), cache.xs.rend());

  const MatrixXd hf = lstm_run(p.fwd, cache.xs, s.hidden,
                               keep_traces ? &cache.fwd : nullptr);
  const MatrixXd hb = lstm_run(p.bwd, cache.xs_rev, s.hidden,
                               keep_traces ? &cache.bwd : nullptr);
  cache.concat.resize(2 * s.hidden, static_cast<Eigen::Index>(n));
  cache.concat.topRows(s.hidden) = hf;
  cache.concat.bottomRows(s.hidden) = hb;

  cache.proj = p.proj_w * cache.concat;
  cache.proj.colwise() += p.proj_b;

  const MatrixXd& x_last = cache.xs.back();
  cache.a1 = (p.mlp1_w * x_last).colwise() + p.mlp1_b;
  cache.a1 = cache.a1.cwiseMax(0.0);
  cache.a2 = (p.mlp2_w * cache.a1).colwise() + p.mlp2_b;
  cache.a2 = cache.a2.cwiseMax(0.0);

  cache.fused = cache.proj.cwiseProduct(cache.a2);
  cache.y = p.head_w * cache.fused;
  cache.y.colwise() += p.head_b;
}

NetParams zero_like(const NetParams& p) {
  NetParams g = p;
  g.fwd.wx.setZero();
  g.fwd.wh.setZero();
  g.fwd.b.setZero();
  g.bwd.wx.setZero();
  g.bwd.wh.setZero();
  g.bwd.b.setZero();
  g.proj_w.setZero();
  g.proj_b.setZero();
  g.mlp1_w.setZero();
  g.mlp1_b.setZero();
  g.mlp2_w.setZero();
  g.mlp2_b.setZero();
  g.head_w.setZero();
  g.head_b.setZero();
  return g;
}

void add_into(NetParams& acc, const NetParams& g) {
  acc.fwd.wx += g.fwd.wx;
  acc.fwd.wh += g.fwd.wh;
  acc.fwd.b += g.fwd.b;
  acc.bwd.wx += g.bwd.wx;
  acc.bwd.wh += g.bwd.wh;
  acc.bwd.b += g.bwd.b;
  acc.proj_w += g.proj_w;
  acc.proj_b += g.proj_b;
  acc.mlp1_w += g.mlp1_w;
  acc.mlp1_b += g.mlp1_b;
  acc.mlp2_w += g.mlp2_w;
  acc.mlp2_b += g.mlp2_b;
  acc.head_w += g.head_w;
  acc.head_b += g.head_b;
}

// Loss of a chunk (sum over windows, not mean) and, when grad is non-null,
// its gradient.
double chunk_loss_grad(const NetParams& p, const Dataset& data,
                       const std::size_t* idx, std::size_t n,
                       double lambda_terrain, NetParams* grad) {
  ForwardCache cache;
  forward_chunk(p, data.windows, idx, n, cache, grad != nullptr);

  double total = 0.0;
  MatrixXd dy(3, static_cast<Eigen::Index>(n));
  for (std::size_t b = 0; b < n; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const double efx = cache.y(0, col) - data.grf[idx[b]][0];
    const double efz = cache.y(1, col) - data.grf[idx[b]][1];
    const double z = cache.y(2, col);
    const double yterr = static_cast<double>(data.terrain[idx[b]]);
    total += 0.5 * (efx * efx + efz * efz) + lambda_terrain * bce(z, yterr);
    dy(0, col) = efx;
    dy(1, col) = efz;
    dy(2, col) = lambda_terrain * (sigmoid(z) - yterr);
  }
  if (!grad) return total;

  grad->head_w += dy * cache.fused.transpose();
  grad->head_b += dy.rowwise().sum();
  const MatrixXd du = p.head_w.transpose() * dy;

  const MatrixXd dproj = du.cwiseProduct(cache.a2);
  const MatrixXd da2 = du.cwiseProduct(cache.proj);

  // MLP path.
  const MatrixXd dz2 =
      da2.cwiseProduct((cache.a2.array() > 0.0).cast<double>().matrix());
  grad->mlp2_w += dz2 * cache.a1.transpose();
  grad->mlp2_b += dz2.rowwise().sum();
  const MatrixXd da1 = p.mlp2_w.transpose() * dz2;
  const MatrixXd dz1 =
      da1.cwiseProduct((cache.a1.array() > 0.0).cast<double>().matrix());
  grad->mlp1_w += dz1 * cache.xs.back().transpose();
  grad->mlp1_b += dz1.rowwise().sum();

  // Temporal path.
  grad->proj_w += dproj * cache.concat.transpose();
  grad->proj_b += dproj.rowwise().sum();
  const MatrixXd dconcat = p.proj_w.transpose() * dproj;
  const int h = p.sizes.hidden;
  lstm_backward(p.fwd, cache.xs, cache.fwd, h, dconcat.topRows(h), grad->fwd);
  lstm_backward(p.bwd, cache.xs_rev, cache.bwd, h, dconcat.bottomRows(h),
                grad->bwd);
  return total;
}

}  // namespace

void NetSizes::validate() const {
  if (input < 1 || hidden < 1 || proj < 1 || mlp1 < 1 || mlp2 < 1 || window < 2) {
    throw std::domain_error("NetSizes: all sizes must be positive, window >= 2");
  }
  if (proj != mlp2) {
    throw std::domain_error(
        "NetSizes: projection width must match the MLP output for the "
        "elementwise fusion");
  }
}

void NetParams::validate() const {
  sizes.validate();
  auto check = [](const MatrixXd& m, int r, int c, const char* name) {
    if (m.rows() != r || m.cols() != c || !m.allFinite()) {
      throw std::domain_error(std::string("NetParams: bad tensor ") + name);
    }
  };
  auto checkv = [](const VectorXd& v, int r, const char* name) {
    if (v.size() != r || !v.allFinite()) {
      throw std::domain_error(std::string("NetParams: bad tensor ") + name);
    }
  };
  check(fwd.wx, 4 * sizes.hidden, sizes.input, "fwd.wx");
  check(fwd.wh, 4 * sizes.hidden, sizes.hidden, "fwd.wh");
  checkv(fwd.b, 4 * sizes.hidden, "fwd.b");
  check(bwd.wx, 4 * sizes.hidden, sizes.input, "bwd.wx");
  check(bwd.wh, 4 * sizes.hidden, sizes.hidden, "bwd.wh");
  checkv(bwd.b, 4 * sizes.hidden, "bwd.b");
  check(proj_w, sizes.proj, 2 * sizes.hidden, "proj_w");
  checkv(proj_b, sizes.proj, "proj_b");
  check(mlp1_w, sizes.mlp1, sizes.input, "mlp1_w");
  checkv(mlp1_b, sizes.mlp1, "mlp1_b");
  check(mlp2_w, sizes.mlp2, sizes.mlp1, "mlp2_w");
  checkv(mlp2_b, sizes.mlp2, "mlp2_b");
  check(head_w, 3, sizes.proj, "head_w");
  checkv(head_b, 3, "head_b");
  checkv(feat_mean, sizes.input, "feat_mean");
  checkv(feat_std, sizes.input, "feat_std");
}

NetParams init_params(const NetSizes& sizes, std::uint64_t seed) {
  sizes.validate();
  std::mt19937_64 rng(seed);
  NetParams p;
  p.sizes = sizes;
  p.fwd = init_cell(sizes, rng);
  p.bwd = init_cell(sizes, rng);
  const double pb = 1.0 / std::sqrt(static_cast<double>(2 * sizes.hidden));
  p.proj_w = uniform_matrix(sizes.proj, 2 * sizes.hidden, pb, rng);
  p.proj_b = VectorXd::Zero(sizes.proj);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(sizes.input));
  p.mlp1_w = uniform_matrix(sizes.mlp1, sizes.input, b1, rng);
  p.mlp1_b = VectorXd::Zero(sizes.mlp1);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(sizes.mlp1));
  p.mlp2_w = uniform_matrix(sizes.mlp2, sizes.mlp1, b2, rng);
  p.mlp2_b = VectorXd::Zero(sizes.mlp2);
  const double bh = 1.0 / std::sqrt(static_cast<double>(sizes.proj));
  p.head_w = uniform_matrix(3, sizes.proj, bh, rng);
  p.head_b = VectorXd::Zero(3);
  p.feat_mean = VectorXd::Zero(sizes.input);
  p.feat_std = VectorXd::Ones(sizes.input);
  return p;
}

std::vector<MatrixXd> featurize(const MatrixXd& stream, int window_len,
                                int stride) {
  if (window_len < 2) throw std::invalid_argument("featurize: window_len < 2");
  if (stride < 1) throw std::invalid_argument("featurize: stride < 1");
  if (stream.cols() < window_len) {
    throw std::invalid_argument("featurize: stream shorter than one window");
  }
  std::vector<MatrixXd> out;
  for (Eigen::Index end = window_len - 1; end < stream.cols(); end += stride) {
    out.push_back(stream.middleCols(end - window_len + 1, window_len));
  }
  return out;
}

Dataset make_dataset(const MatrixXd& stream, const MatrixXd& labels4xT,
                     int window_len, int stride) {
  if (labels4xT.rows() != 4 || labels4xT.cols() != stream.cols()) {
    throw std::invalid_argument("make_dataset: labels must be 4 x T");
  }
  Dataset d;
  d.windows = featurize(stream, window_len, stride);
  for (Eigen::Index end = window_len - 1; end < stream.cols(); end += stride) {
    d.grf.emplace_back(labels4xT(0, end), labels4xT(1, end));
    d.terrain.push_back(labels4xT(2, end) > 0.5 ? 1 : 0);
    d.stance.push_back(labels4xT(3, end) > 0.5 ? 1 : 0);
  }
  return d;
}

void forward_range(const NetParams& p, const std::vector<MatrixXd>& windows,
                   std::size_t begin, std::size_t end, MatrixXd& y_out) {
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  ForwardCache cache;
  forward_chunk(p, windows, idx.data(), idx.size(), cache, false);
  y_out = cache.y;
}

GrfEstimate forward_one(const NetParams& p, const MatrixXd& window) {
  if (window.rows() != p.sizes.input || window.cols() != p.sizes.window) {
    throw std::invalid_argument("forward_one: window shape mismatch");
  }
  std::vector<MatrixXd> ws{window};
  MatrixXd y;
  forward_range(p, ws, 0, 1, y);
  return {y(0, 0), y(1, 0), sigmoid(y(2, 0))};
}

double loss(const NetParams& p, const Dataset& data,
            const std::vector<std::size_t>& indices, double lambda_terrain,
            std::size_t chunk, int threads) {
  if (indices.empty()) throw std::invalid_argument("loss: empty index set");
  auto chunks = par::make_chunks(indices.size(), chunk);
  std::vector<double> partial(chunks.size(), 0.0);
  par::for_chunks(indices.size(), chunk, threads, [&](const par::ChunkRange& c) {
    partial[c.index] = chunk_loss_grad(p, data, indices.data() + c.begin,
                                       c.end - c.begin, lambda_terrain, nullptr);
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total / static_cast<double>(indices.size());
}

double loss_and_gradient(const NetParams& p, const Dataset& data,
                         const std::vector<std::size_t>& indices,
                         double lambda_terrain, std::size_t chunk, int threads,
                         NetParams& grad) {
  if (indices.empty()) throw std::invalid_argument("loss_and_gradient: empty index set");
  auto chunks = par::make_chunks(indices.size(), chunk);
  std::vector<double> partial(chunks.size(), 0.0);
  std::vector<NetParams> grads(chunks.size(), zero_like(p));
  par::for_chunks(indices.size(), chunk, threads, [&](const par::ChunkRange& c) {
    partial[c.index] =
        chunk_loss_grad(p, data, indices.data() + c.begin, c.end - c.begin,
                        lambda_terrain, &grads[c.index]);
  });
  grad = zero_like(p);
  double total = 0.0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    total += partial[i];
    add_into(grad, grads[i]);
  }
  // Mean loss; scale the gradient to match.
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  VectorXd gflat = flatten(grad) * inv_n;
  unflatten(gflat, grad);
  return total * inv_n;
}

VectorXd flatten(const NetParams& p) {
  std::vector<const MatrixXd*> mats = {&p.fwd.wx,  &p.fwd.wh,  &p.bwd.wx,
                                       &p.bwd.wh,  &p.proj_w,  &p.mlp1_w,
                                       &p.mlp2_w,  &p.head_w};
  std::vector<const VectorXd*> vecs = {&p.fwd.b,  &p.bwd.b,  &p.proj_b,
                                       &p.mlp1_b, &p.mlp2_b, &p.head_b};
  Eigen::Index n = 0;
  for (auto* m : mats) n += m->size();
  for (auto* v : vecs) n += v->size();
  VectorXd out(n);
  Eigen::Index at = 0;
  for (auto* m : mats) {
    out.segment(at, m->size()) = Eigen::Map<const VectorXd>(m->data(), m->size());
    at += m->size();
  }
  for (auto* v : vecs) {
    out.segment(at, v->size()) = *v;
    at += v->size();
  }
  return out;
}

void unflatten(const VectorXd& v, NetParams& p) {
  std::vector<MatrixXd*> mats = {&p.fwd.wx, &p.fwd.wh, &p.bwd.wx, &p.bwd.wh,
                                 &p.proj_w, &p.mlp1_w, &p.mlp2_w, &p.head_w};
  std::vector<VectorXd*> vecs = {&p.fwd.b,  &p.bwd.b,  &p.proj_b,
                                 &p.mlp1_b, &p.mlp2_b, &p.head_b};
  Eigen::Index at = 0;
  for (auto* m : mats) {
    Eigen::Map<VectorXd>(m->data(), m->size()) = v.segment(at, m->size());
    at += m->size();
  }
  for (auto* vv : vecs) {
    *vv = v.segment(at, vv->size());
    at += vv->size();
  }
  if (at != v.size()) {
    throw std::invalid_argument("unflatten: size mismatch");
  }
}

NetParams train(const Dataset& data, const NetSizes& sizes,
                const TrainConfig& cfg, TrainReport* report) {
  if (data.size() == 0) throw TrainError("train: empty dataset");
  if (cfg.max_epochs < 1) throw TrainError("train: max_epochs < 1");
  for (const auto& w : data.windows) {
    if (w.rows() != sizes.input || w.cols() != sizes.window) {
      throw TrainError("train: window shape does not match NetSizes");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = static_cast<std::size_t>(
      std::round(cfg.val_fraction * static_cast<double>(data.size())));
  if (n_val == 0 || n_val >= data.size()) {
    throw TrainError("train: empty train or validation split");
  }
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(n_val));
  std::vector<std::size_t> val_idx(order.end() - static_cast<long>(n_val), order.end());

  NetParams p = init_params(sizes, cfg.seed);

  // Standardization stats from the training split only.
  p.feat_mean.setZero();
  p.feat_std.setZero();
  double count = 0.0;
  for (std::size_t i : train_idx) {
    p.feat_mean += data.windows[i].rowwise().sum();
    count += static_cast<double>(sizes.window);
  }
  p.feat_mean /= count;
  for (std::size_t i : train_idx) {
    p.feat_std +=
        (data.windows[i].colwise() - p.feat_mean).array().square().matrix().rowwise().sum();
  }
  p.feat_std = (p.feat_std / count).cwiseSqrt();

  // Adam state over the flat parameter vector.
  VectorXd theta = flatten(p);
  VectorXd m = VectorXd::Zero(theta.size());
  VectorXd v = VectorXd::Zero(theta.size());
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long adam_t = 0;
  double lr = cfg.lr;

  NetParams best = p;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_improve = 0, since_lr = 0;
  TrainReport local;

  const auto batch = static_cast<std::size_t>(std::max(cfg.batch, 1));
  NetParams grad = zero_like(p);

  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < train_idx.size(); b += batch) {
      const std::size_t e = std::min(b + batch, train_idx.size());
      std::vector<std::size_t> mb(train_idx.begin() + static_cast<long>(b),
                                  train_idx.begin() + static_cast<long>(e));
      const double l = loss_and_gradient(p, data, mb, cfg.lambda_terrain,
                                         cfg.chunk, cfg.threads, grad);
      if (!std::isfinite(l)) {
        throw TrainError("train: non-finite loss at epoch " +
                         std::to_string(epoch) + ", minibatch offset " +
                         std::to_string(b));
      }
      epoch_loss += l * static_cast<double>(mb.size());
      seen += mb.size();

      ++adam_t;
      const VectorXd g = flatten(grad);
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
      theta -= (lr / bc1) * m.cwiseQuotient(
                                ((v / bc2).cwiseSqrt().array() + eps).matrix());
      unflatten(theta, p);
    }
    epoch_loss /= static_cast<double>(seen);

    const double val_loss =
        loss(p, data, val_idx, cfg.lambda_terrain, cfg.chunk, cfg.threads);
    local.epochs.push_back({epoch, epoch_loss, val_loss, lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      best = p;
      best_epoch = epoch;
      since_improve = 0;
      since_lr = 0;
    } else {
      ++since_improve;
      ++since_lr;
      if (since_lr > cfg.lr_plateau) {
        lr = std::max(lr * cfg.lr_factor, 1e-9);
        since_lr = 0;
      }
      if (since_improve > cfg.patience) {
        break;
      }
    }
  }

  local.best_epoch = best_epoch;
  local.best_val_loss = best_val;
  local.stopped_epoch = std::min(epoch, cfg.max_epochs - 1);
  if (report) *report = local;
  return best;
}

EvalResult evaluate(const NetParams& p, const Dataset& data, int threads) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<Eigen::Vector3d> outputs(data.size());
  par::for_chunks(data.size(), 256, threads, [&](const par::ChunkRange& c) {
    MatrixXd y;
    forward_range(p, data.windows, c.begin, c.end, y);
    for (std::size_t i = c.begin; i < c.end; ++i) {
      outputs[i] = y.col(static_cast<Eigen::Index>(i - c.begin));
    }
  });

  EvalResult r;
  double se_fx[2] = {0, 0}, se_fz[2] = {0, 0};
  std::size_t n_stance[2] = {0, 0};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int terr = data.terrain[i];
    if ((outputs[i][2] > 0.0 ? 1 : 0) == terr) ++correct;
    if (data.stance[i] == 1) {
      const double efx = outputs[i][0] - data.grf[i][0];
      const double efz = outputs[i][1] - data.grf[i][1];
      se_fx[terr] += efx * efx;
      se_fz[terr] += efz * efz;
      ++n_stance[terr];
    }
  }
  auto rmse = [](double se, std::size_t n) {
    return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                  : std::sqrt(se / static_cast<double>(n));
  };
  r.rmse_fx_solid = rmse(se_fx[0], n_stance[0]);
  r.rmse_fz_solid = rmse(se_fz[0], n_stance[0]);
  r.rmse_fx_sand = rmse(se_fx[1], n_stance[1]);
  r.rmse_fz_sand = rmse(se_fz[1], n_stance[1]);
  r.stance_solid = n_stance[0];
  r.stance_sand = n_stance[1];
  r.terrain_accuracy =
      static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

namespace {

void write_matrix(std::ostringstream& out, const char* name, const MatrixXd& m) {
  out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << format_double(m(i, j)) << (j + 1 < m.cols() ? " " : "\n");
    }
  }
}

void write_vector(std::ostringstream& out, const char* name, const VectorXd& v) {
  out << "vector " << name << " " << v.size() << "\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out << format_double(v[i]) << (i + 1 < v.size() ? " " : "\n");
  }
}

}  // namespace

void save_checkpoint(const NetParams& p, const std::string& path) {
  p.validate();
  std::ostringstream out;
  out << "# exosim-grfnet-checkpoint v1\n";
  out << "sizes " << p.sizes.input << " " << p.sizes.hidden << " " << p.sizes.proj
      << " " << p.sizes.mlp1 << " " << p.sizes.mlp2 << " " << p.sizes.window
      << "\n";
  write_matrix(out, "fwd.wx", p.fwd.wx);
  write_matrix(out, "fwd.wh", p.fwd.wh);
  write_vector(out, "fwd.b", p.fwd.b);
  write_matrix(out, "bwd.wx", p.bwd.wx);
  write_matrix(out, "bwd.wh", p.bwd.wh);
  write_vector(out, "bwd.b", p.bwd.b);
  write_matrix(out, "proj_w", p.proj_w);
  write_vector(out, "proj_b", p.proj_b);
  write_matrix(out, "mlp1_w", p.mlp1_w);
  write_vector(out, "mlp1_b", p.mlp1_b);
  write_matrix(out, "mlp2_w", p.mlp2_w);
  write_vector(out, "mlp2_b", p.mlp2_b);
  write_matrix(out, "head_w", p.head_w);
  write_vector(out, "head_b", p.head_b);
  write_vector(out, "feat_mean", p.feat_mean);
  write_vector(out, "feat_std", p.feat_std);
  io::write_text_file(path, out.str());
}

NetParams load_checkpoint(const std::string& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != "# exosim-grfnet-checkpoint v1") {
    throw SchemaError("checkpoint: bad or missing version header in " + path);
  }
  std::string word;
  in >> word;
  if (word != "sizes") throw SchemaError("checkpoint: expected sizes line");
  NetParams p;
  in >> p.sizes.input >> p.sizes.hidden >> p.sizes.proj >> p.sizes.mlp1 >>
      p.sizes.mlp2 >> p.sizes.window;
  if (!in) throw SchemaError("checkpoint: malformed sizes line");

  auto read_matrix = [&](const char* name, MatrixXd& m) {
    std::string kind, nm;
    Eigen::Index r = 0, c = 0;
    in >> kind >> nm >> r >> c;
    if (!in || kind != "tensor" || nm != name) {
      throw SchemaError(std::string("checkpoint: expected tensor ") + name);
    }
    m.resize(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) {
        if (!(in >> m(i, j))) {
          throw SchemaError(std::string("checkpoint: truncated tensor ") + name);
        }
      }
    }
  };
  auto read_vector = [&](const char* name, VectorXd& v) {
    std::string kind, nm;
    Eigen::Index r = 0;
    in >> kind >> nm >> r;
    if (!in || kind != "vector" || nm != name) {
      throw SchemaError(std::string("checkpoint: expected vector ") + name);
    }
    v.resize(r);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (!(in >> v[i])) {
        throw SchemaError(std::string("checkpoint: truncated vector ") + name);
      }
    }
  };

  read_matrix("fwd.wx", p.fwd.wx);
  read_matrix("fwd.wh", p.fwd.wh);
  read_vector("fwd.b", p.fwd.b);
  read_matrix("bwd.wx", p.bwd.wx);
  read_matrix("bwd.wh", p.bwd.wh);
  read_vector("bwd.b", p.bwd.b);
  read_matrix("proj_w", p.proj_w);
  read_vector("proj_b", p.proj_b);
  read_matrix("mlp1_w", p.mlp1_w);
  read_vector("mlp1_b", p.mlp1_b);
  read_matrix("mlp2_w", p.mlp2_w);
  read_vector("mlp2_b", p.mlp2_b);
  read_matrix("head_w", p.head_w);
  read_vector("head_b", p.head_b);
  read_vector("feat_mean", p.feat_mean);
  read_vector("feat_std", p.feat_std);
  try {
    p.validate();
  } catch (const std::domain_error& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

}  // namespace exosim::grf
