#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "exosim/csvio.hpp"
#include "exosim/grf_net.hpp"

using namespace exosim;
using grf::Dataset;
using grf::MatrixXd;
using grf::NetParams;
using grf::NetSizes;
using grf::VectorXd;

namespace {

NetSizes tiny_sizes() {
  NetSizes s;
  s.hidden = 4;
  s.proj = 4;
  s.mlp1 = 8;
  s.mlp2 = 4;
  s.window = 3;
  return s;
}

// Labels derived from simple smooth functions of the window, so a small
// network can learn them quickly.
Dataset synthetic_dataset(const NetSizes& sizes, std::size_t n,
                          std::uint64_t seed, double label_noise = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    MatrixXd w(sizes.input, sizes.window);
    for (int r = 0; r < sizes.input; ++r) {
      for (int c = 0; c < sizes.window; ++c) w(r, c) = gauss(rng);
    }
    const double m0 = w.row(0).mean();
    const double m1 = w.row(1).mean();
    d.windows.push_back(w);
    d.grf.emplace_back(0.4 * std::tanh(m0) + label_noise * gauss(rng),
                       0.6 * std::tanh(m1) + label_noise * gauss(rng));
    d.terrain.push_back(m0 > 0.0 ? 1 : 0);
    d.stance.push_back(i % 3 == 0 ? 0 : 1);
  }
  return d;
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_CASE("featurize counts windows and rejects short streams") {
  MatrixXd stream(9, 20);
  stream.setRandom();
  CHECK(grf::featurize(stream, 6, 1).size() == 15);
  CHECK(grf::featurize(stream, 20, 1).size() == 1);
  CHECK(grf::featurize(stream, 6, 3).size() == 5);
  MatrixXd tiny(9, 4);
  tiny.setRandom();
  CHECK_THROWS_AS(grf::featurize(tiny, 6, 1), std::invalid_argument);
}

TEST_CASE("zero-variance channels standardize to zero and a zero head is "
          "(0, 0, 1/2)") {
  NetSizes sizes = tiny_sizes();
  NetParams p = grf::init_params(sizes, 3);
  // Constant stream: stats from it have zero std.
  p.feat_mean.setConstant(2.5);
  p.feat_std.setZero();
  p.head_w.setZero();
  p.head_b.setZero();
  MatrixXd window(sizes.input, sizes.window);
  window.setConstant(2.5);
  const auto est = grf::forward_one(p, window);
  CHECK(est.fx_norm == doctest::Approx(0.0));
  CHECK(est.fz_norm == doctest::Approx(0.0));
  CHECK(est.terrain_prob == doctest::Approx(0.5));
}

TEST_CASE("a zero MLP path annihilates the fusion, leaving the head bias") {
  NetSizes sizes = tiny_sizes();
  NetParams p = grf::init_params(sizes, 4);
  p.mlp1_w.setZero();
  p.mlp1_b.setZero();
  p.mlp2_w.setZero();
  p.mlp2_b.setZero();
  p.head_b << 0.7, -0.3, 0.2;
  MatrixXd window(sizes.input, sizes.window);
  window.setRandom();
  const auto est = grf::forward_one(p, window);
  CHECK(est.fx_norm == doctest::Approx(0.7));
  CHECK(est.fz_norm == doctest::Approx(-0.3));
  CHECK(est.terrain_prob == doctest::Approx(1.0 / (1.0 + std::exp(-0.2))));
}

TEST_CASE("analytic gradients match finite differences on the small net") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 5, 11);
  NetParams p = grf::init_params(sizes, 12);
  // Non-trivial standardization stats.
  p.feat_mean.setConstant(0.1);
  p.feat_std.setConstant(0.9);

  const auto idx = all_indices(data);
  NetParams grad = p;
  grf::loss_and_gradient(p, data, idx, 0.5, 64, 1, grad);
  const VectorXd g = grf::flatten(grad);

  VectorXd theta = grf::flatten(p);
  const double h = 1e-6;
  double max_rel = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    NetParams pp = p, pm = p;
    grf::unflatten(tp, pp);
    grf::unflatten(tm, pm);
    const double fp = grf::loss(pp, data, idx, 0.5, 64, 1);
    const double fm = grf::loss(pm, data, idx, 0.5, 64, 1);
    const double fd = (fp - fm) / (2.0 * h);
    const double diff = std::abs(g[i] - fd);
    if (diff < 1e-8) continue;  // below the FD cancellation noise floor
    const double denom = std::max(std::abs(fd), std::abs(g[i]));
    max_rel = std::max(max_rel, diff / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("gradient accumulation is identical across chunking and threads") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 100, 21);
  const NetParams p = grf::init_params(sizes, 5);
  const auto idx = all_indices(data);

  NetParams g1 = p, g4 = p;
  const double l1 = grf::loss_and_gradient(p, data, idx, 0.3, 16, 1, g1);
  const double l4 = grf::loss_and_gradient(p, data, idx, 0.3, 16, 4, g4);
  CHECK(l1 == l4);
  const VectorXd v1 = grf::flatten(g1);
  const VectorXd v4 = grf::flatten(g4);
  CHECK((v1 - v4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is bitwise deterministic per seed") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 60, 31);
  grf::TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.batch = 16;
  cfg.seed = 77;
  const NetParams a = grf::train(data, sizes, cfg);
  const NetParams b = grf::train(data, sizes, cfg);
  CHECK((grf::flatten(a) - grf::flatten(b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full-batch gradient is order-independent, so the first optimizer "
          "step is too") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 40, 41);
  const NetParams p = grf::init_params(sizes, 5);
  auto idx = all_indices(data);
  NetParams g1 = p;
  grf::loss_and_gradient(p, data, idx, 0.3, 4096, 1, g1);
  std::mt19937_64 rng(4242);
  std::shuffle(idx.begin(), idx.end(), rng);
  NetParams g2 = p;
  grf::loss_and_gradient(p, data, idx, 0.3, 4096, 1, g2);
  const VectorXd v1 = grf::flatten(g1);
  const VectorXd v2 = grf::flatten(g2);
  CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("loss drops by 10x on a small training run") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 200, 51);
  grf::TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.batch = 32;
  cfg.patience = 50;
  cfg.lr = 0.02;
  cfg.seed = 13;
  grf::TrainReport report;
  grf::train(data, sizes, cfg, &report);
  REQUIRE(report.epochs.size() >= 2);
  CHECK(report.epochs.back().train_loss <
        0.1 * report.epochs.front().train_loss);
}

TEST_CASE("early stopping with patience 0 stops at the first stall and the "
          "best epoch dominates later ones") {
  const NetSizes sizes = tiny_sizes();
  // Noisy labels force validation wiggle.
  const Dataset data = synthetic_dataset(sizes, 80, 61, 0.3);
  grf::TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.batch = 16;
  cfg.patience = 0;
  cfg.seed = 3;
  grf::TrainReport report;
  grf::train(data, sizes, cfg, &report);
  REQUIRE(report.stopped_epoch < 199);  // it actually stalled
  // Stops exactly one epoch after the last improvement.
  CHECK(report.stopped_epoch == report.best_epoch + 1);

  // With a larger patience, the best validation loss is never beaten by the
  // epochs encountered before patience expired.
  grf::TrainConfig cfg2 = cfg;
  cfg2.patience = 6;
  grf::TrainReport report2;
  grf::train(data, sizes, cfg2, &report2);
  for (const auto& e : report2.epochs) {
    CHECK(report2.best_val_loss <= e.val_loss + 1e-15);
  }
}

TEST_CASE("outputs are Lipschitz in a perturbed input channel") {
  const NetSizes sizes = tiny_sizes();
  NetParams p = grf::init_params(sizes, 8);
  p.feat_std.setConstant(1.0);
  MatrixXd w(sizes.input, sizes.window);
  w.setRandom();
  const auto base = grf::forward_one(p, w);
  double ratio_1em2 = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    MatrixXd wp = w;
    wp(2, 1) += eps;
    const auto est = grf::forward_one(p, wp);
    const double d = std::abs(est.fx_norm - base.fx_norm) +
                     std::abs(est.fz_norm - base.fz_norm) +
                     std::abs(est.terrain_prob - base.terrain_prob);
    const double ratio = d / eps;
    if (eps == 1e-2) {
      ratio_1em2 = ratio;
    } else {
      CHECK(ratio < 3.0 * (ratio_1em2 + 1.0));  // no blow-up as eps -> 0
    }
  }
}

TEST_CASE("terrain head separates linearly separable features") {
  NetSizes sizes = tiny_sizes();
  sizes.hidden = 8;
  sizes.proj = 8;
  sizes.mlp2 = 8;
  const Dataset data = synthetic_dataset(sizes, 240, 71);
  grf::TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.batch = 32;
  cfg.lr = 0.02;
  cfg.lambda_terrain = 1.0;
  cfg.seed = 15;
  const NetParams p = grf::train(data, sizes, cfg);
  const auto eval = grf::evaluate(p, data);
  CHECK(eval.terrain_accuracy >= 0.95);
}

TEST_CASE("evaluate: perfect predictor and constant-zero baseline") {
  const NetSizes sizes = tiny_sizes();
  NetParams p = grf::init_params(sizes, 9);
  Dataset data = synthetic_dataset(sizes, 60, 81);
  // Relabel with the network's own outputs: metrics must be perfect.
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto est = grf::forward_one(p, data.windows[i]);
    data.grf[i] = {est.fx_norm, est.fz_norm};
    data.terrain[i] = est.terrain_prob > 0.5 ? 1 : 0;
  }
  const auto perfect = grf::evaluate(p, data);
  CHECK(perfect.rmse_fx_solid == doctest::Approx(0.0));
  CHECK(perfect.rmse_fz_sand == doctest::Approx(0.0));
  CHECK(perfect.terrain_accuracy == doctest::Approx(1.0));

  // Constant-zero predictor: RMSE equals the label RMS over stance windows.
  NetParams zero = p;
  zero.head_w.setZero();
  zero.head_b.setZero();
  const Dataset d2 = synthetic_dataset(sizes, 300, 91);
  const auto got = grf::evaluate(zero, d2);
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d2.size(); ++i) {
    if (d2.stance[i] == 1 && d2.terrain[i] == 0) {
      se += d2.grf[i][0] * d2.grf[i][0];
      ++n;
    }
  }
  CHECK(got.rmse_fx_solid == doctest::Approx(std::sqrt(se / n)).epsilon(1e-12));
  CHECK_THROWS_AS(grf::evaluate(p, Dataset{}), std::invalid_argument);
}

TEST_CASE("evaluate is identical across thread counts") {
  const NetSizes sizes = tiny_sizes();
  const NetParams p = grf::init_params(sizes, 10);
  const Dataset data = synthetic_dataset(sizes, 700, 101);
  const auto a = grf::evaluate(p, data, 1);
  const auto b = grf::evaluate(p, data, 4);
  CHECK(a.rmse_fx_solid == b.rmse_fx_solid);
  CHECK(a.rmse_fz_sand == b.rmse_fz_sand);
  CHECK(a.terrain_accuracy == b.terrain_accuracy);
}

TEST_CASE("checkpoints round-trip bitwise and reject tampering") {
  const NetSizes sizes = tiny_sizes();
  NetParams p = grf::init_params(sizes, 33);
  p.feat_mean.setRandom();
  p.feat_std = p.feat_std.cwiseAbs();
  const std::string path = "/tmp/exosim_test_ckpt.txt";
  grf::save_checkpoint(p, path);
  const NetParams q = grf::load_checkpoint(path);
  CHECK((grf::flatten(p) - grf::flatten(q)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.feat_mean - q.feat_mean).cwiseAbs().maxCoeff() == 0.0);

  // Header tampering is a schema error.
  std::string text = io::read_text_file(path);
  text[2] = 'X';
  io::write_text_file(path, text);
  CHECK_THROWS_AS(grf::load_checkpoint(path), SchemaError);
  std::remove(path.c_str());
}

TEST_CASE("training rejects degenerate configurations") {
  const NetSizes sizes = tiny_sizes();
  const Dataset data = synthetic_dataset(sizes, 3, 1);
  grf::TrainConfig cfg;
  cfg.val_fraction = 0.0;  // empty validation split
  CHECK_THROWS_AS(grf::train(data, sizes, cfg), TrainError);
  CHECK_THROWS_AS(grf::train(Dataset{}, sizes, {}), TrainError);
  NetSizes bad = sizes;
  bad.proj = 5;  // fusion width mismatch
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
}
