#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "exosim/errors.hpp"

namespace exosim::grf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kInputChannels = 9;  // {shank,heel,toe} x {ax, az, gy}

struct NetSizes {
  int input = kInputChannels;
  int hidden = 64;  // per LSTM direction
  int proj = 64;    // temporal projection output; must equal mlp2
  int mlp1 = 128;
  int mlp2 = 64;
  int window = 6;   // samples per sliding window

  void validate() const;
};

struct LstmCell {
  // Gate order along rows: input, forget, cell, output.
  MatrixXd wx;  // 4h x input
  MatrixXd wh;  // 4h x hidden
  VectorXd b;   // 4h
};

struct NetParams {
  NetSizes sizes;
  LstmCell fwd, bwd;
  MatrixXd proj_w;  // proj x 2h
  VectorXd proj_b;
  MatrixXd mlp1_w;  // mlp1 x input
  VectorXd mlp1_b;
  MatrixXd mlp2_w;  // mlp2 x mlp1
  VectorXd mlp2_b;
  MatrixXd head_w;  // 3 x proj
  VectorXd head_b;
  // Per-channel standardization, frozen from the training split.
  VectorXd feat_mean;
  VectorXd feat_std;

  void validate() const;
};

/// Seeded initialization: uniform fan-in input weights, orthogonalized
/// recurrent blocks, forget-gate bias +1.
NetParams init_params(const NetSizes& sizes, std::uint64_t seed);

struct GrfEstimate {
  double fx_norm = 0.0;
  double fz_norm = 0.0;
  double terrain_prob = 0.5;
};

/// Windowed dataset. Each window is an input x window_len matrix of raw
/// (unstandardized) channels; labels are aligned with the window's last
/// sample.
struct Dataset {
  std::vector<MatrixXd> windows;
  std::vector<Eigen::Vector2d> grf;  // body-weight-normalized (fx, fz)
  std::vector<int> terrain;          // 0 solid, 1 sand
  std::vector<int> stance;           // 1 when the foot is in contact

  std::size_t size() const { return windows.size(); }
};

/// Sliding windows over a uniformly sampled stream (channels x T).
/// label-producing variants align each window with its last sample index.
std::vector<MatrixXd> featurize(const MatrixXd& stream, int window_len,
                                int stride);
Dataset make_dataset(const MatrixXd& stream, const MatrixXd& labels4xT,
                     int window_len, int stride);

/// Raw head outputs (rows fx, fz, terrain logit) for a batch of windows.
/// Standardization is applied inside using the stored stats. Window index
/// range [begin, end) lets callers evaluate fixed chunks.
void forward_range(const NetParams& p, const std::vector<MatrixXd>& windows,
                   std::size_t begin, std::size_t end, MatrixXd& y_out);

GrfEstimate forward_one(const NetParams& p, const MatrixXd& window);

/// Mean training loss: MSE on (fx, fz) plus lambda_terrain * BCE on the
/// terrain logit.
double loss(const NetParams& p, const Dataset& data,
            const std::vector<std::size_t>& indices, double lambda_terrain,
            std::size_t chunk, int threads);

/// Loss plus gradient accumulated over fixed-size chunks combined in chunk
/// order, so the result is identical for any thread count.
double loss_and_gradient(const NetParams& p, const Dataset& data,
                         const std::vector<std::size_t>& indices,
                         double lambda_terrain, std::size_t chunk, int threads,
                         NetParams& grad);

VectorXd flatten(const NetParams& p);
void unflatten(const VectorXd& v, NetParams& p);

struct TrainConfig {
  double lr = 0.01;
  int batch = 256;
  int max_epochs = 200;
  int patience = 10;      // early stop after this many non-improving epochs
  int lr_plateau = 4;     // halve LR after this many non-improving epochs
  double lr_factor = 0.5;
  double lambda_terrain = 0.5;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;
  std::size_t chunk = 256;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  int stopped_epoch = -1;
};

/// Adam training with early stopping on the validation split and
/// plateau-halved learning rate. Deterministic per seed; returns the
/// parameters of the best validation epoch.
NetParams train(const Dataset& data, const NetSizes& sizes,
                const TrainConfig& cfg, TrainReport* report = nullptr);

struct EvalResult {
  // RMSE over stance windows only, per terrain and component.
  double rmse_fx_solid = 0.0, rmse_fz_solid = 0.0;
  double rmse_fx_sand = 0.0, rmse_fz_sand = 0.0;
  std::size_t stance_solid = 0, stance_sand = 0;
  double terrain_accuracy = 0.0;  // over all windows
};

EvalResult evaluate(const NetParams& p, const Dataset& data, int threads = 1);

void save_checkpoint(const NetParams& p, const std::string& path);
NetParams load_checkpoint(const std::string& path);

}  // namespace exosim::grf
