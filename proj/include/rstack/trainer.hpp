#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rstack/rpn.hpp"
#include "rstack/tensor.hpp"

namespace rstack::trainer {

struct TrainConfig {
  std::string model = "ddrstack";  // "ddrstack" | "baseline"
  int hidden = 32;
  int layers = 1;     // baseline LSTM depth
  Scalar lr = 1e-3;
  int epochs = 70;
  int batch = 32;
  uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir;
  Scalar clip = 0.0;  // global-norm gradient clip; 0 disables
  int threads = 1;    // batch sharding; gradients merge by summation in thread order
  int eval_cadence = 1;
};

using Predictor = std::function<std::vector<Scalar>(const rpn::Expression&)>;

struct EvalReport {
  Scalar overall_l1 = 0.0;                 // mean over expressions of per-expression mean L1
  std::vector<Scalar> per_subproblem_l1;   // length n of the evaluated set
  int n = 0;
  std::string model_id;
  int epoch = -1;
  Scalar answer_mean = 0.0;
  Scalar answer_std = 0.0;
};

EvalReport evaluate(const Predictor& predict, std::span<const rpn::Expression> exprs,
                    const std::string& model_id, int epoch);

void write_eval_csv(const EvalReport& report, const std::string& path);
EvalReport read_eval_csv(const std::string& path);

struct TrainResult {
  Scalar best_val_l1 = 0.0;
  int best_epoch = -1;
  std::string checkpoint_path;
};

// Seeded-shuffle epochs over train.rpn with one Adam step per batch; logs
// epoch,train_l1,val_l1 to out_dir/metrics.csv and keeps the checkpoint with
// the best validation L1 at out_dir/best.ddrc. A non-finite loss aborts with
// a NumericError naming epoch, batch and expression index.
TrainResult train(const TrainConfig& config);

struct LoadedModel {
  Predictor predict;
  std::string id;
};

LoadedModel load_model(const std::string& checkpoint_path);

// Merges run metric logs and eval CSVs into curves_train.csv,
// curves_subproblem.csv, stats.csv and params.csv under out_dir.
void report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace rstack::trainer
