#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "wwtp/dioko/dataset.hpp"
#include "wwtp/dioko/model.hpp"
#include "wwtp/nn/adam.hpp"

namespace wwtp::dioko {

/// Standardized tensors for a batch of windows; column j*B + b holds step j of window b.
struct WindowBatch {
  int batch = 0;
  int horizon = 0;
  Matrix x;  // (ny + nd) x B(T+1), encoder inputs
  Matrix u;  // nu x B*T
  Matrix c;  // 1 x B(T+1)
};

/// Standardization constants from the training split of `ds`.
void fit_standardization(Model& model, const Dataset& ds);

WindowBatch make_batch(const Model& model, const Dataset& ds, std::span<const std::size_t> starts,
                       int horizon);

struct LossVars {
  nn::Var total;  // data + l2
  nn::Var data;   // mean over windows of the summed consistency and cost errors
};

/// Records the windowed loss on `tape` (which must be built over model.params()).
LossVars record_loss(nn::Tape& tape, const Model& model, const WindowBatch& batch, double l2);

struct LossValue {
  double total = 0.0;
  double data = 0.0;
  nn::Gradients grads;
};

LossValue loss_and_gradient(const Model& model, const WindowBatch& batch, double l2);
/// Data term plus l2 for a single window, no gradient.
double training_loss(const Model& model, const SampleWindow& window, double l2 = 0.1);
/// Mean data loss per window over a split (no l2).
double data_loss(const Model& model, const Dataset& ds, Split split, int horizon = -1,
                 std::size_t chunk = 256);

struct EpochRecord {
  int epoch = 0;
  double train = 0.0;
  double val = 0.0;
};

struct TrainConfig {
  int epochs = 400;
  int batch = 128;
  double lr = 1e-3;
  double l2 = 0.1;
  std::uint64_t seed = 1;
  int horizon = 30;
  int threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Model best;
  Model last;
  std::vector<EpochRecord> curve;
  double initial_val = 0.0;
  int best_epoch = 0;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(int epoch, int batch, const std::string& why);
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// Fits standardization on the training split, then runs Adam over shuffled minibatches.
/// Keeps the parameters with the lowest validation loss.
TrainResult train(Model model, const Dataset& ds, const TrainConfig& cfg);

void write_loss_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve);

/// Mean over windows of the summed squared standardized cost error over steps 1..horizon.
double evaluate_prediction(const Model& model, const Dataset& ds, Split split, int horizon = 16);
/// Same metric for the predictor that holds the current cost.
double evaluate_constant_predictor(const Model& model, const Dataset& ds, Split split,
                                   int horizon = 16);

}  // namespace wwtp::dioko
