// dkm: train, retrain, compress, evaluate and cost LeNet-class models.
// Exit codes: 0 success, 1 contract/format/runtime error, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkm/compress.hpp"
#include "dkm/dataio.hpp"
#include "dkm/dataset.hpp"
#include "dkm/energy.hpp"
#include "dkm/error.hpp"
#include "dkm/kernels.hpp"
#include "dkm/nn.hpp"
#include "dkm/pipeline.hpp"

namespace {

using namespace dkm;

struct DataOptions {
  std::string dir;
  bool synthetic = false;
  std::size_t synthetic_train = 800;
  std::size_t synthetic_test = 400;
  std::uint64_t synthetic_seed = 7;
  std::size_t train_limit = 0;  // 0 = all
  std::size_t test_limit = 0;

  void add(CLI::App* app) {
    app->add_option("--data", dir, "Directory holding MNIST IDX files (plain or .gz)");
    app->add_flag("--synthetic", synthetic, "Use the built-in 4-class 16x16 pattern dataset");
    app->add_option("--synthetic-train", synthetic_train, "Synthetic training samples")->capture_default_str();
    app->add_option("--synthetic-test", synthetic_test, "Synthetic test samples")->capture_default_str();
    app->add_option("--synthetic-seed", synthetic_seed, "Synthetic dataset seed")->capture_default_str();
    app->add_option("--train-limit", train_limit, "Use only the first N training samples (0 = all)");
    app->add_option("--test-limit", test_limit, "Use only the first N test samples (0 = all)");
  }

  void check() const {
    if (synthetic == !dir.empty()) throw CLI::ValidationError("exactly one of --data and --synthetic is required");
  }

  Dataset load(const std::string& split) const {
    check();
    Dataset d = synthetic ? synthetic_patterns(split == "train" ? synthetic_train : synthetic_test,
                                               split == "train" ? synthetic_seed : synthetic_seed + 1, split)
                          : load_mnist(dir, split);
    const std::size_t limit = split == "train" ? train_limit : test_limit;
    return limit ? d.head(limit) : d;
  }

  Architecture arch() const {
    return synthetic ? lenet5({1, 16, 16}, 4) : lenet5();
  }
};

struct TrainOptions {
  TrainConfig cfg;

  void add(CLI::App* app, std::size_t default_epochs) {
    cfg.epochs = default_epochs;
    app->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--momentum", cfg.momentum, "SGD momentum")->capture_default_str();
    app->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Initialisation and shuffle seed")->capture_default_str();
    app->add_option("--lr-decay", cfg.lr_decay, "Step decay factor")->capture_default_str();
    app->add_option("--lr-decay-every", cfg.lr_decay_every, "Epochs between decays")->capture_default_str();
  }
};

struct ShareOptions {
  double cluster_rate = 0.1;
  std::optional<double> first_layer_rate;
  std::vector<double> sparsity_p;
  std::vector<std::size_t> ks;
  std::optional<double> layer_cr;
  unsigned weight_bits = 32;
  std::uint64_t kmeans_seed = 0;
  std::size_t restarts = 3;
  std::size_t max_iter = 100;

  void add(CLI::App* app, bool with_kmeans) {
    auto* rate = app->add_option("--cluster-rate", cluster_rate, "K/N for conv layers after the first")
                     ->capture_default_str();
    app->add_option("--first-layer-rate", first_layer_rate, "K/N for the first conv layer (default 4x, max 1)");
    app->add_option("--sparsity-p", sparsity_p, "Zero-cluster fraction per conv layer")->delimiter(',');
    auto* k = app->add_option("--k", ks, "Explicit K per conv layer")->delimiter(',')->excludes(rate);
    app->add_option("--layer-cr", layer_cr, "Pick K so each conv layer after the first reaches this CR")
        ->excludes(rate)
        ->excludes(k);
    app->add_option("--weight-bits", weight_bits, "Bits per stored weight in the CR accounting")
        ->capture_default_str();
    if (with_kmeans) {
      app->add_option("--kmeans-seed", kmeans_seed, "k-means seed (layer i uses seed + i)")->capture_default_str();
      app->add_option("--restarts", restarts, "k-means restarts")->capture_default_str();
      app->add_option("--max-iter", max_iter, "Lloyd iteration cap")->capture_default_str();
    }
  }

  ShareConfig config(const Architecture& arch) const {
    ShareConfig c;
    c.cluster_rate = cluster_rate;
    c.first_layer_rate = first_layer_rate;
    c.sparsity_p = sparsity_p;
    c.weight_bits = weight_bits;
    c.kmeans.seed = kmeans_seed;
    c.kmeans.restarts = restarts;
    c.kmeans.max_iter = max_iter;
    if (!ks.empty()) c.per_layer_k = ks;
    if (layer_cr) c.per_layer_k = ks_for_layer_cr(arch, *layer_cr, weight_bits);
    return c;
  }
};

class Logger {
 public:
  void open(const std::string& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::app);
    if (!file_) throw ContractError("cannot open log file " + path);
  }
  void operator()(const std::string& line) {
    std::cout << line << '\n' << std::flush;
    if (file_.is_open()) file_ << line << '\n' << std::flush;
  }

 private:
  std::ofstream file_;
};

std::string join_ks(const std::vector<std::size_t>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + std::to_string(ks[i]);
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dkm: k-means weight sharing with spectrally regularised retraining"};
  app.require_subcommand(1);
  int threads = 0;
  std::string log_path;
  app.add_option("--threads", threads, "Worker threads for the parallel kernels (0 = runtime default)");
  app.add_option("--log", log_path, "Also append log lines to this file");
  Logger log;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a baseline model from scratch");
  DataOptions train_data;
  TrainOptions train_opts;
  std::string train_out;
  train_data.add(train_cmd);
  train_opts.add(train_cmd, 60);
  std::string arch_name = "lenet5";
  train_cmd->add_option("--arch", arch_name, "Architecture")->check(CLI::IsMember({"lenet5"}))->capture_default_str();
  train_cmd->add_option("-o,--out", train_out, "Output model (.dkmm)")->required();

  // retrain
  auto* retrain_cmd = app.add_subcommand("retrain", "Retrain a model with the spectral k-means regulariser");
  DataOptions retrain_data;
  TrainOptions retrain_opts;
  ShareOptions retrain_share;
  std::string retrain_in, retrain_out;
  double lambda = 1e-4;
  std::size_t refresh = 5;
  retrain_data.add(retrain_cmd);
  retrain_opts.add(retrain_cmd, 30);
  retrain_share.add(retrain_cmd, false);
  retrain_cmd->add_option("--model", retrain_in, "Input model (.dkmm)")->required();
  retrain_cmd->add_option("--lambda", lambda, "Regulariser weight")->capture_default_str();
  retrain_cmd->add_option("--refresh-epochs", refresh, "Epochs between F refreshes")->capture_default_str();
  retrain_cmd->add_option("-o,--out", retrain_out, "Output model (.dkmm)")->required();

  // compress
  auto* compress_cmd = app.add_subcommand("compress", "Share conv weights by row-wise k-means");
  ShareOptions compress_share;
  std::string compress_in, compress_out;
  compress_share.add(compress_cmd, true);
  compress_cmd->add_option("--model", compress_in, "Input model (.dkmm)")->required();
  compress_cmd->add_option("-o,--out", compress_out, "Output compressed model (.dkmc)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a model or compressed model");
  DataOptions eval_data;
  std::string eval_in, eval_split = "t10k";
  eval_data.add(eval_cmd);
  eval_cmd->add_option("--model", eval_in, "Model (.dkmm) or compressed model (.dkmc)")->required();
  eval_cmd->add_option("--split", eval_split, "Dataset split")->check(CLI::IsMember({"train", "t10k"}))
      ->capture_default_str();

  // energy
  auto* energy_cmd = app.add_subcommand("energy", "Energy-cost report for a network");
  std::string energy_spec, energy_model;
  unsigned bw = 16, bx = 16;
  std::size_t input_side = 28, classes = 10;
  auto* spec_opt = energy_cmd->add_option("--netspec", energy_spec, "Network spec text file");
  energy_cmd->add_option("--model", energy_model, "Model (.dkmm) or compressed model (.dkmc)")->excludes(spec_opt);
  energy_cmd->add_option("--bw", bw, "Weight precision in bits")->capture_default_str();
  energy_cmd->add_option("--bx", bx, "Activation precision in bits")->capture_default_str();
  energy_cmd->add_option("--input-side", input_side, "Input side when costing the default LeNet")
      ->capture_default_str();
  energy_cmd->add_option("--classes", classes, "Classes when costing the default LeNet")->capture_default_str();

  // report
  auto* report_cmd = app.add_subcommand("report", "Run the full pipeline and print the CR / accuracy / energy table");
  DataOptions report_data;
  TrainOptions report_train;
  ShareOptions report_share;
  std::vector<double> report_rates, report_crs;
  std::string report_baseline, report_out;
  std::size_t retrain_epochs = 30;
  double retrain_lr = 0.01;
  report_data.add(report_cmd);
  report_train.add(report_cmd, 60);
  report_cmd->add_option("--cluster-rates", report_rates, "Compression points given as cluster rates")
      ->delimiter(',');
  report_cmd->add_option("--layer-crs", report_crs, "Compression points given as layer-wise CR targets")
      ->delimiter(',');
  report_cmd->add_option("--cluster-rate", report_share.cluster_rate, "Single compression point");
  report_cmd->add_option("--first-layer-rate", report_share.first_layer_rate, "K/N for the first conv layer");
  report_cmd->add_option("--sparsity-p", report_share.sparsity_p, "Zero-cluster fraction per conv layer")
      ->delimiter(',');
  report_cmd->add_option("--weight-bits", report_share.weight_bits, "Bits per stored weight")->capture_default_str();
  report_cmd->add_option("--baseline", report_baseline, "Skip baseline training and use this model (.dkmm)");
  report_cmd->add_option("--retrain-epochs", retrain_epochs, "Regularised retraining epochs")->capture_default_str();
  report_cmd->add_option("--retrain-lr", retrain_lr, "Regularised retraining learning rate")->capture_default_str();
  report_cmd->add_option("--lambda", lambda, "Regulariser weight")->capture_default_str();
  report_cmd->add_option("--refresh-epochs", refresh, "Epochs between F refreshes")->capture_default_str();
  report_cmd->add_option("-o,--out", report_out, "Also write the report table here");

  try {
    app.parse(argc, argv);
    if (*train_cmd) train_data.check();
    if (*retrain_cmd) retrain_data.check();
    if (*eval_cmd) eval_data.check();
    if (*report_cmd) report_data.check();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (threads > 0) kernels::set_threads(threads);
    log.open(log_path);

    if (*train_cmd) {
      const auto train_set = train_data.load("train");
      auto r = train(init_model(train_data.arch(), train_opts.cfg.seed), train_set, train_opts.cfg, nullptr,
                     [&](const EpochRecord& rec) { log(format_epoch_record(rec)); });
      round_to_float32(r.model);
      save_model(train_out, r.model);
      log("saved " + train_out);
    } else if (*retrain_cmd) {
      const auto train_set = retrain_data.load("train");
      const auto model = load_model(retrain_in);
      const auto reg = reg_config_for(model.arch(), retrain_share.config(model.arch()), lambda, refresh);
      std::vector<std::size_t> ks;
      for (const auto& [layer, k] : reg.per_layer_k) ks.push_back(k);
      log("retrain: K per conv layer " + join_ks(ks) + ", lambda " + fmt("%g", lambda));
      const auto out = retrain(model, train_set, retrain_opts.cfg, reg,
                               [&](const EpochRecord& rec) { log(format_epoch_record(rec)); });
      save_model(retrain_out, out);
      log("saved " + retrain_out);
    } else if (*compress_cmd) {
      const auto model = load_model(compress_in);
      const auto cm = share(model, compress_share.config(model.arch()));
      save_compressed(compress_out, cm);
      std::vector<std::size_t> ks;
      for (const auto& l : cm.layers) ks.push_back(l.codebook.k());
      log("K=" + join_ks(ks) + " CR=" + fmt("%.4f", compression_ratio(model, cm)));
      log("saved " + compress_out);
    } else if (*eval_cmd) {
      const auto data = eval_data.load(eval_split);
      const ModelParams model =
          is_compressed_file(eval_in) ? reconstruct(load_compressed(eval_in)) : load_model(eval_in);
      log("top1=" + fmt("%.4f", evaluate(model, data)));
    } else if (*energy_cmd) {
      NetworkSpec spec;
      if (!energy_spec.empty()) {
        spec = load_netspec(energy_spec);
      } else if (!energy_model.empty()) {
        spec = is_compressed_file(energy_model) ? netspec_from_compressed(load_compressed(energy_model), bw, bx)
                                                : netspec_from_arch(load_model(energy_model).arch(), bw, bx);
      } else {
        spec = netspec_from_arch(lenet5({1, input_side, input_side}, classes), bw, bx);
      }
      std::cout << format_energy_report(total_energy(spec));
    } else if (*report_cmd) {
      const auto train_set = report_data.load("train");
      const auto test_set = report_data.load("t10k");
      const auto arch = report_data.arch();
      PipelineConfig cfg;
      cfg.train = report_train.cfg;
      cfg.retrain = report_train.cfg;
      cfg.retrain.epochs = retrain_epochs;
      cfg.retrain.learning_rate = retrain_lr;
      cfg.lambda = lambda;
      cfg.refresh_every_epochs = refresh;
      auto base = report_share.config(arch);
      for (double r : report_rates) {
        auto c = base;
        c.cluster_rate = r;
        cfg.points.push_back({"rate" + fmt("%g", r), c});
      }
      for (double t : report_crs) {
        auto c = base;
        c.per_layer_k = ks_for_layer_cr(arch, t, c.weight_bits);
        cfg.points.push_back({"cr" + fmt("%g", t), c});
      }
      if (cfg.points.empty()) cfg.points.push_back({"rate" + fmt("%g", base.cluster_rate), base});
      std::optional<ModelParams> baseline;
      if (!report_baseline.empty()) baseline = load_model(report_baseline);
      const auto report = run_pipeline(train_set, test_set, arch, cfg, std::ref(log), baseline);
      const auto table = format_pipeline_report(report);
      std::cout << table;
      if (!report_out.empty()) {
        std::ofstream out(report_out);
        out << table;
        if (!out) throw ContractError("cannot write " + report_out);
      }
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
