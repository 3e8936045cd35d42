#include "dkm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "dkm/error.hpp"

namespace dkm {

namespace {

template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const PipelineStageError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineStageError(name, e.what());
  }
}

}  // namespace

PipelineConfig::PipelineConfig() { retrain.epochs = 30; }

void PipelineConfig::validate(const Architecture& arch) const {
  train.validate();
  retrain.validate();
  require(!points.empty(), "PipelineConfig: no compression points");
  const auto conv = arch.conv_layers();
  for (const auto& p : points) (void)allocate_k(arch, p.share);
  RegConfig reg;
  reg.lambda = lambda;
  reg.refresh_every_epochs = refresh_every_epochs;
  reg.validate();
  require(energy_bw >= 1 && energy_bw <= 64 && energy_bx >= 1 && energy_bx <= 64,
          "PipelineConfig: energy precisions must lie in [1, 64]");
  (void)conv;
}

std::vector<std::size_t> ks_for_layer_cr(const Architecture& arch, double target, unsigned weight_bits,
                                         double first_layer_factor) {
  require(target > 0.0, "ks_for_layer_cr: target must be > 0");
  const auto conv = arch.conv_layers();
  require(!conv.empty(), "ks_for_layer_cr: no conv layers");
  std::vector<std::size_t> ks(conv.size());
  double rate = 0.0;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const auto& l = arch.layers()[conv[i]];
    const std::size_t n = l.kernel * l.in_c * l.out_c;
    ks[i] = k_for_layer_ratio(l.kernel, n, weight_bits, target);
    if (i == 1) rate = static_cast<double>(ks[i]) / static_cast<double>(n);
  }
  if (conv.size() > 1) {
    const auto& l = arch.layers()[conv[0]];
    const std::size_t n = l.kernel * l.in_c * l.out_c;
    const double first = std::min(1.0, first_layer_factor * rate);
    ks[0] = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(first * static_cast<double>(n))), 1, n);
  }
  return ks;
}

RegConfig reg_config_for(const Architecture& arch, const ShareConfig& share, double lambda,
                         std::size_t refresh_every_epochs) {
  const auto conv = arch.conv_layers();
  const auto ks = allocate_k(arch, share);
  RegConfig reg;
  reg.lambda = lambda;
  reg.refresh_every_epochs = refresh_every_epochs;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    reg.per_layer_k[conv[i]] = ks[i];
    if (!share.sparsity_p.empty() && share.sparsity_p[i] > 0.0) reg.sparsity_p[conv[i]] = share.sparsity_p[i];
  }
  reg.validate();
  return reg;
}

ModelParams retrain(const ModelParams& baseline, const Dataset& train_set, const TrainConfig& config,
                    const RegConfig& reg, const EpochCallback& on_epoch) {
  auto hook = make_hook(reg, baseline.arch());
  auto result = train(baseline, train_set, config, hook.get(), on_epoch);
  round_to_float32(result.model);
  return std::move(result.model);
}

PipelineReport run_pipeline(const Dataset& train_set, const Dataset& test_set, const Architecture& arch,
                            const PipelineConfig& config, const StageLog& log,
                            const std::optional<ModelParams>& baseline_in) {
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  stage("config", [&] {
    config.validate(arch);
    return 0;
  });

  PipelineReport report;
  report.train_size = train_set.size();
  report.test_size = test_set.size();

  const ModelParams baseline = stage("train", [&] {
    if (baseline_in) {
      if (!(baseline_in->arch() == arch)) throw ContractError("baseline model has a different architecture");
      return *baseline_in;
    }
    note("train: baseline, " + std::to_string(config.train.epochs) + " epochs");
    auto r = train(init_model(arch, config.train.seed), train_set, config.train, nullptr,
                   [&](const EpochRecord& rec) { note("train: " + format_epoch_record(rec)); });
    round_to_float32(r.model);
    return std::move(r.model);
  });
  report.baseline_acc = stage("evaluate", [&] { return evaluate(baseline, test_set); });
  report.baseline_energy =
      stage("energy", [&] { return total_energy(netspec_from_arch(arch, config.energy_bw, config.energy_bx)); });
  char buf[128];
  std::snprintf(buf, sizeof buf, "baseline accuracy %.4f", report.baseline_acc);
  note(buf);

  // The regulariser only sees min(K, s) columns of F per layer, so points that
  // agree on those widths (and on sparsity) share one retrained model.
  std::map<std::pair<std::vector<std::size_t>, std::vector<double>>, std::pair<ModelParams, double>> retrained;
  const auto conv = arch.conv_layers();

  for (const auto& point : config.points) {
    PointResult pr;
    pr.label = point.label;
    pr.ks = allocate_k(arch, point.share);

    std::vector<std::size_t> widths;
    for (std::size_t i = 0; i < conv.size(); ++i) widths.push_back(std::min(pr.ks[i], arch.layers()[conv[i]].kernel));
    const auto key = std::make_pair(widths, point.share.sparsity_p);
    auto it = retrained.find(key);
    if (it == retrained.end()) {
      note("retrain: point " + point.label);
      auto model = stage("retrain", [&] {
        const auto reg = reg_config_for(arch, point.share, config.lambda, config.refresh_every_epochs);
        return retrain(baseline, train_set, config.retrain, reg,
                       [&](const EpochRecord& rec) { note("retrain: " + format_epoch_record(rec)); });
      });
      const double acc = stage("evaluate", [&] { return evaluate(model, test_set); });
      it = retrained.emplace(key, std::make_pair(std::move(model), acc)).first;
    } else {
      note("retrain: point " + point.label + " reuses an equivalent retrained model");
    }
    const auto& [dkm_source, dkm_source_acc] = it->second;
    pr.retrained_acc = dkm_source_acc;

    note("share: point " + point.label);
    const auto dkm_cm = stage("share", [&] { return share(dkm_source, point.share); });
    const auto wr_cm = stage("share", [&] { return share(baseline, point.share); });
    pr.cr = stage("share", [&] { return compression_ratio(baseline, wr_cm); });
    for (std::size_t i = 0; i < conv.size(); ++i) {
      pr.dkm_inertia.push_back(dkm_cm.layers[i].codebook.inertia);
      pr.wr_inertia.push_back(wr_cm.layers[i].codebook.inertia);
    }
    pr.dkm_acc = stage("evaluate", [&] { return evaluate(reconstruct(dkm_cm), test_set); });
    pr.wr_acc = stage("evaluate", [&] { return evaluate(reconstruct(wr_cm), test_set); });
    pr.energy = stage("energy", [&] {
      return total_energy(netspec_from_compressed(dkm_cm, config.energy_bw, config.energy_bx));
    });
    std::snprintf(buf, sizeof buf, "point %s: CR %.3f, dkm %.4f, wr %.4f", point.label.c_str(), pr.cr, pr.dkm_acc,
                  pr.wr_acc);
    note(buf);
    report.points.push_back(std::move(pr));
  }
  return report;
}

std::string format_pipeline_report(const PipelineReport& r) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "# pipeline report\n"
                "# train=%zu test=%zu baseline_acc=%.4f baseline_energy_mac=%.4f\n"
                "# CR counts conv layers only; fc weights and all biases pass through uncompressed\n"
                "# dkm = regularised retraining then sharing; wr = sharing the baseline directly\n"
                "# dkm_delta = dkm_acc - retrained_acc; wr_delta = wr_acc - baseline_acc;"
                " dkm_vs_base = dkm_acc - baseline_acc\n",
                r.train_size, r.test_size, r.baseline_acc, r.baseline_energy.total_energy_mac);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %-16s %8s %10s %8s %8s %10s %10s %12s %16s %18s\n", "point", "K", "CR",
                "retrained", "dkm_acc", "wr_acc", "dkm_delta", "wr_delta", "dkm_vs_base", "weight_rep", "total_mac");
  out += buf;
  for (const auto& p : r.points) {
    std::string ks;
    for (std::size_t i = 0; i < p.ks.size(); ++i) ks += (i ? "," : "") + std::to_string(p.ks[i]);
    std::snprintf(buf, sizeof buf, "%-10s %-16s %8.3f %10.4f %8.4f %8.4f %+10.4f %+10.4f %+12.4f %16llu %18.4f\n",
                  p.label.c_str(), ks.c_str(), p.cr, p.retrained_acc, p.dkm_acc, p.wr_acc,
                  p.dkm_acc - p.retrained_acc, p.wr_acc - r.baseline_acc, p.dkm_acc - r.baseline_acc,
                  static_cast<unsigned long long>(p.energy.weight_rep_cost), p.energy.total_energy_mac);
    out += buf;
  }
  return out;
}

}  // namespace dkm
