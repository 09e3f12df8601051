#include "rstack/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <thread>

#include "rstack/baseline.hpp"
#include "rstack/errors.hpp"
#include "rstack/nn.hpp"
#include "rstack/stack_model.hpp"
#include "rstack/tape.hpp"

namespace fs = std::filesystem;

namespace rstack::trainer {

namespace {

void validate(const TrainConfig& c) {
  if (c.model != "ddrstack" && c.model != "baseline") {
    throw ConfigError("train: unknown model '" + c.model + "'");
  }
  if (c.lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (c.batch < 1) throw ConfigError("train: batch must be >= 1");
  if (c.hidden < 1) throw ConfigError("train: hidden must be >= 1");
  if (c.layers < 1) throw ConfigError("train: layers must be >= 1");
  if (c.threads < 1) throw ConfigError("train: threads must be >= 1");
  if (c.eval_cadence < 1) throw ConfigError("train: eval cadence must be >= 1");
  if (c.data_dir.empty() || c.out_dir.empty()) {
    throw ConfigError("train: data and out directories are required");
  }
}

std::vector<rpn::Expression> load_split(const std::string& dir, const char* file) {
  const fs::path p = fs::path(dir) / file;
  if (!fs::exists(p)) throw DataError("train: missing dataset file " + p.string());
  std::vector<rpn::Expression> exprs = rpn::read_dataset(p.string());
  if (exprs.empty()) throw DataError("train: empty dataset file " + p.string());
  return exprs;
}

// Fisher-Yates on the documented splitmix64 stream; epoch e uses block 256+e.
void seeded_shuffle(std::vector<int>& idx, uint64_t seed, int epoch) {
  Rng rng = derived_rng(seed, 256 + static_cast<uint64_t>(epoch));
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = rng.next_below(static_cast<uint32_t>(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

// Per-thread gradient buffers plus loss bookkeeping for one batch shard.
struct Shard {
  std::vector<Array> grads;
  Scalar loss_sum = 0.0;
  int bad_expr = -1;  // dataset index of the first non-finite loss, if any
};

template <typename Model>
void run_shard(Model& model, const std::vector<rpn::Expression>& data,
               std::span<const int> indices, std::span<const nn::NamedParam> params, Tape& tape,
               Shard& shard) {
  shard.loss_sum = 0.0;
  shard.bad_expr = -1;
  for (int idx : indices) {
    tape.reset();
    std::vector<Var> preds = model.forward(tape, data[static_cast<size_t>(idx)]);
    Var loss = nn::l1_loss(tape, preds, data[static_cast<size_t>(idx)].answers);
    const Scalar v = tape.scalar_value(loss);
    if (!std::isfinite(v)) {
      shard.bad_expr = idx;
      return;
    }
    tape.backward(loss);
    shard.loss_sum += v;
  }
}

void clip_global_norm(std::span<const nn::NamedParam> params, Scalar max_norm) {
  Scalar sq = 0.0;
  for (const nn::NamedParam& p : params) sq += (p.tensor->grad * p.tensor->grad).sum();
  const Scalar norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const Scalar scale = max_norm / norm;
    for (const nn::NamedParam& p : params) p.tensor->grad *= scale;
  }
}

template <typename Model>
TrainResult train_loop(Model& model, const TrainConfig& config) {
  const std::vector<rpn::Expression> train_set = load_split(config.data_dir, "train.rpn");
  const std::vector<rpn::Expression> val_set = load_split(config.data_dir, "val.rpn");

  fs::create_directories(config.out_dir);
  const std::string metrics_path = (fs::path(config.out_dir) / "metrics.csv").string();
  const std::string ckpt_path = (fs::path(config.out_dir) / "best.ddrc").string();
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("train: cannot open " + metrics_path);
  metrics << "epoch,train_l1,val_l1\n";
  metrics.flush();

  std::vector<nn::NamedParam> params = model.parameters();
  nn::Adam adam(nn::AdamConfig{config.lr, 0.9, 0.999, 1e-8});

  const int n_threads = config.threads;
  std::vector<Tape> tapes(static_cast<size_t>(n_threads));
  std::vector<Shard> shards(static_cast<size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    Shard& sh = shards[static_cast<size_t>(t)];
    sh.grads.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      sh.grads[i] = Array::Zero(params[i].tensor->numel());
      tapes[static_cast<size_t>(t)].redirect_leaf(*params[i].tensor, &sh.grads[i]);
    }
  }

  Predictor validator = [&model](const rpn::Expression& e) { return model.predict(e); };

  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult result;
  Scalar best_val = std::numeric_limits<Scalar>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    seeded_shuffle(order, config.seed, epoch);
    Scalar epoch_loss = 0.0;
    const int total = static_cast<int>(order.size());
    for (int start = 0, batch_no = 0; start < total; start += config.batch, ++batch_no) {
      const int count = std::min(config.batch, total - start);
      const std::span<const int> batch(order.data() + start, static_cast<size_t>(count));

      // fixed contiguous sharding so results are reproducible per thread count
      const int chunk = (count + n_threads - 1) / n_threads;
      std::vector<std::thread> pool;
      for (int t = 1; t < n_threads; ++t) {
        const int lo = std::min(count, t * chunk);
        const int hi = std::min(count, (t + 1) * chunk);
        pool.emplace_back([&, t, lo, hi] {
          run_shard(model, train_set, batch.subspan(static_cast<size_t>(lo),
                                                    static_cast<size_t>(hi - lo)),
                    params, tapes[static_cast<size_t>(t)], shards[static_cast<size_t>(t)]);
        });
      }
      run_shard(model, train_set, batch.subspan(0, static_cast<size_t>(std::min(count, chunk))),
                params, tapes[0], shards[0]);
      for (std::thread& th : pool) th.join();

      nn::zero_grads(params);
      for (int t = 0; t < n_threads; ++t) {
        Shard& sh = shards[static_cast<size_t>(t)];
        if (sh.bad_expr >= 0) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_no) + ", expression " +
                             std::to_string(sh.bad_expr));
        }
        for (size_t i = 0; i < params.size(); ++i) {
          params[i].tensor->grad += sh.grads[i];
          sh.grads[i].setZero();
        }
        epoch_loss += sh.loss_sum;
      }
      const Scalar inv = 1.0 / static_cast<Scalar>(count);
      for (const nn::NamedParam& p : params) p.tensor->grad *= inv;
      if (config.clip > 0.0) clip_global_norm(params, config.clip);
      adam.step(params);
    }

    const Scalar train_l1 = epoch_loss / static_cast<Scalar>(total);
    const bool do_eval = (epoch % config.eval_cadence == 0) || epoch == config.epochs;
    metrics << epoch << ',' << rpn::format_double(train_l1) << ',';
    if (do_eval) {
      EvalReport val = evaluate(validator, val_set, model.id(), epoch);
      metrics << rpn::format_double(val.overall_l1);
      if (val.overall_l1 < best_val) {
        best_val = val.overall_l1;
        result.best_val_l1 = val.overall_l1;
        result.best_epoch = epoch;
        model.save(ckpt_path);
      }
    }
    metrics << '\n';
    metrics.flush();
  }
  result.checkpoint_path = ckpt_path;
  if (result.best_epoch < 0) throw ContractError("train: no validation epoch ran");
  return result;
}

}  // namespace

EvalReport evaluate(const Predictor& predict, std::span<const rpn::Expression> exprs,
                    const std::string& model_id, int epoch) {
  if (exprs.empty()) throw ContractError("evaluate: empty dataset");
  const int n = exprs[0].n;
  EvalReport report;
  report.n = n;
  report.model_id = model_id;
  report.epoch = epoch;
  report.per_subproblem_l1.assign(static_cast<size_t>(n), 0.0);
  Scalar overall = 0.0;
  Scalar ans_sum = 0.0;
  Scalar ans_sq = 0.0;
  for (const rpn::Expression& e : exprs) {
    if (e.n != n) throw ContractError("evaluate: mixed expression lengths in dataset");
    const std::vector<Scalar> preds = predict(e);
    if (static_cast<int>(preds.size()) != n) {
      throw ContractError("evaluate: model emitted " + std::to_string(preds.size()) +
                          " predictions for n=" + std::to_string(n));
    }
    Scalar expr_sum = 0.0;
    for (int k = 0; k < n; ++k) {
      const Scalar err = std::abs(preds[static_cast<size_t>(k)] - e.answers[static_cast<size_t>(k)]);
      report.per_subproblem_l1[static_cast<size_t>(k)] += err;
      expr_sum += err;
      ans_sum += e.answers[static_cast<size_t>(k)];
      ans_sq += e.answers[static_cast<size_t>(k)] * e.answers[static_cast<size_t>(k)];
    }
    overall += expr_sum / static_cast<Scalar>(n);
  }
  const Scalar count = static_cast<Scalar>(exprs.size());
  report.overall_l1 = overall / count;
  for (Scalar& v : report.per_subproblem_l1) v /= count;
  const Scalar total_answers = count * static_cast<Scalar>(n);
  report.answer_mean = ans_sum / total_answers;
  const Scalar var = ans_sq / total_answers - report.answer_mean * report.answer_mean;
  report.answer_std = std::sqrt(std::max(0.0, var));
  return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("evaluate: cannot open " + path);
  os << "metric,value\n";
  os << "model," << report.model_id << '\n';
  os << "epoch," << report.epoch << '\n';
  os << "n," << report.n << '\n';
  os << "overall_l1," << rpn::format_double(report.overall_l1) << '\n';
  os << "answer_mean," << rpn::format_double(report.answer_mean) << '\n';
  os << "answer_std," << rpn::format_double(report.answer_std) << '\n';
  for (size_t k = 0; k < report.per_subproblem_l1.size(); ++k) {
    os << "sub_l1_" << k << ',' << rpn::format_double(report.per_subproblem_l1[k]) << '\n';
  }
  if (!os) throw DataError("evaluate: write failed for " + path);
}

namespace {

Scalar parse_scalar(const std::string& s, const std::string& path) {
  Scalar v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw DataError("report: bad number '" + s + "' in " + path);
  return v;
}

}  // namespace

EvalReport read_eval_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("report: cannot open " + path);
  EvalReport report;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) throw DataError("report: malformed line in " + path);
    const std::string key = line.substr(0, comma);
    const std::string val = line.substr(comma + 1);
    if (key == "model") {
      report.model_id = val;
    } else if (key == "epoch") {
      report.epoch = static_cast<int>(parse_scalar(val, path));
    } else if (key == "n") {
      report.n = static_cast<int>(parse_scalar(val, path));
    } else if (key == "overall_l1") {
      report.overall_l1 = parse_scalar(val, path);
    } else if (key == "answer_mean") {
      report.answer_mean = parse_scalar(val, path);
    } else if (key == "answer_std") {
      report.answer_std = parse_scalar(val, path);
    } else if (key.rfind("sub_l1_", 0) == 0) {
      report.per_subproblem_l1.push_back(parse_scalar(val, path));
    }
  }
  return report;
}

TrainResult train(const TrainConfig& config) {
  validate(config);
  if (config.model == "ddrstack") {
    StackModel model = StackModel::make(config.seed, config.hidden);
    return train_loop(model, config);
  }
  LstmBaseline model = LstmBaseline::make(config.seed, config.hidden, config.layers);
  return train_loop(model, config);
}

LoadedModel load_model(const std::string& checkpoint_path) {
  std::vector<nn::NamedTensor> entries = nn::load_checkpoint(checkpoint_path);
  Scalar kind = -1.0;
  for (const nn::NamedTensor& e : entries) {
    if (e.name == "meta/kind") kind = e.tensor.data[0];
  }
  if (kind == 0.0) {
    auto model = std::make_shared<StackModel>(StackModel::load_from(entries));
    return {[model](const rpn::Expression& e) { return model->predict(e); }, model->id()};
  }
  if (kind == 1.0) {
    auto model = std::make_shared<LstmBaseline>(LstmBaseline::load_from(entries));
    return {[model](const rpn::Expression& e) { return model->predict(e); }, model->id()};
  }
  throw DataError("checkpoint: missing or unknown model kind in " + checkpoint_path);
}

namespace {

struct MetricRow {
  std::string train_l1;
  std::string val_l1;
};

// epoch -> (train,val), raw strings so report stays bit-faithful to the log
std::map<int, MetricRow> read_metrics(const std::string& path) {
  std::map<int, MetricRow> rows;
  std::ifstream is(path);
  if (!is) return rows;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t c1 = line.find(',');
    const size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) continue;
    const int epoch = std::atoi(line.substr(0, c1).c_str());
    rows[epoch] = MetricRow{line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1)};
  }
  return rows;
}

}  // namespace

void report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  fs::create_directories(out_dir);

  struct Run {
    std::string label;
    std::map<int, MetricRow> metrics;
    std::vector<std::pair<std::string, EvalReport>> evals;  // (eval file stem, report)
  };
  std::vector<Run> runs;
  for (const std::string& dir : run_dirs) {
    Run run;
    run.label = fs::path(dir).filename().string();
    if (run.label.empty()) run.label = fs::path(dir).parent_path().filename().string();
    run.metrics = read_metrics((fs::path(dir) / "metrics.csv").string());
    std::vector<fs::path> eval_files;
    if (fs::exists(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("eval_", 0) == 0 && entry.path().extension() == ".csv") {
          eval_files.push_back(entry.path());
        }
      }
    }
    std::sort(eval_files.begin(), eval_files.end());
    for (const fs::path& p : eval_files) {
      run.evals.emplace_back(p.stem().string(), read_eval_csv(p.string()));
    }
    runs.push_back(std::move(run));
  }

  {
    std::ofstream os((fs::path(out_dir) / "curves_train.csv").string(), std::ios::trunc);
    os << "epoch";
    for (const Run& r : runs) os << ',' << r.label << "_train_l1," << r.label << "_val_l1";
    os << '\n';
    int max_epoch = 0;
    for (const Run& r : runs) {
      if (!r.metrics.empty()) max_epoch = std::max(max_epoch, r.metrics.rbegin()->first);
    }
    for (int e = 1; e <= max_epoch; ++e) {
      os << e;
      for (const Run& r : runs) {
        auto it = r.metrics.find(e);
        if (it == r.metrics.end()) {
          os << ",,";
        } else {
          os << ',' << it->second.train_l1 << ',' << it->second.val_l1;
        }
      }
      os << '\n';
    }
  }

  {
    std::ofstream os((fs::path(out_dir) / "curves_subproblem.csv").string(), std::ios::trunc);
    os << "subproblem";
    size_t max_n = 0;
    for (const Run& r : runs) {
      for (const auto& [stem, rep] : r.evals) {
        os << ',' << r.label << '_' << stem;
        max_n = std::max(max_n, rep.per_subproblem_l1.size());
      }
    }
    os << '\n';
    for (size_t k = 0; k < max_n; ++k) {
      os << k;
      for (const Run& r : runs) {
        for (const auto& [stem, rep] : r.evals) {
          os << ',';
          if (k < rep.per_subproblem_l1.size()) os << rpn::format_double(rep.per_subproblem_l1[k]);
        }
      }
      os << '\n';
    }
  }

  {
    std::ofstream os((fs::path(out_dir) / "stats.csv").string(), std::ios::trunc);
    os << "run,eval,model,overall_l1,answer_mean,answer_std\n";
    for (const Run& r : runs) {
      for (const auto& [stem, rep] : r.evals) {
        os << r.label << ',' << stem << ',' << rep.model_id << ','
           << rpn::format_double(rep.overall_l1) << ',' << rpn::format_double(rep.answer_mean)
           << ',' << rpn::format_double(rep.answer_std) << '\n';
      }
    }
  }

  {
    // reference trainable-parameter counts, including both baseline depths at
    // h=128 since the depth for that run is a config knob
    std::ofstream os((fs::path(out_dir) / "params.csv").string(), std::ios::trunc);
    os << "model,hidden,layers,parameters\n";
    StackModel s32 = StackModel::make(0, 32);
    os << "ddrstack,32,," << s32.parameter_count() << '\n';
    LstmBaseline b32 = LstmBaseline::make(0, 32, 1);
    os << "baseline,32,1," << b32.parameter_count() << '\n';
    LstmBaseline b128 = LstmBaseline::make(0, 128, 1);
    os << "baseline,128,1," << b128.parameter_count() << '\n';
    LstmBaseline b128x2 = LstmBaseline::make(0, 128, 2);
    os << "baseline,128,2," << b128x2.parameter_count() << '\n';
  }
}

}  // namespace rstack::trainer
