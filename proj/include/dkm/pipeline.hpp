#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dkm/compress.hpp"
#include "dkm/dataset.hpp"
#include "dkm/energy.hpp"
#include "dkm/error.hpp"
#include "dkm/nn.hpp"
#include "dkm/spectral_reg.hpp"

namespace dkm {

/// A failure inside run_pipeline, tagged with the stage that raised it.
class PipelineStageError : public Error {
 public:
  PipelineStageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// One compression setting evaluated by the pipeline.
struct PipelinePoint {
  std::string label;
  ShareConfig share;
};

struct PipelineConfig {
  TrainConfig train;    // baseline training
  TrainConfig retrain;  // regularised retraining, started from the baseline
  double lambda = 1e-4;
  std::size_t refresh_every_epochs = 5;
  std::vector<PipelinePoint> points;
  unsigned energy_bw = 16, energy_bx = 16;

  PipelineConfig();
  void validate(const Architecture& arch) const;
};

struct PointResult {
  std::string label;
  std::vector<std::size_t> ks;     // per conv layer
  double cr = 0.0;                 // conv layers only
  double retrained_acc = 0.0;      // regularised model before sharing
  double dkm_acc = 0.0;            // regularised model after sharing
  double wr_acc = 0.0;             // baseline after sharing
  std::vector<double> dkm_inertia;  // per conv layer, same K and seed in both branches
  std::vector<double> wr_inertia;
  EnergyReport energy;             // shared model
};

struct PipelineReport {
  std::size_t train_size = 0, test_size = 0;
  double baseline_acc = 0.0;
  EnergyReport baseline_energy;
  std::vector<PointResult> points;
};

using StageLog = std::function<void(const std::string&)>;

/// K per conv layer so that every conv layer after the first reaches at least
/// `target` layer-wise CR; the first layer gets `first_layer_factor` times that
/// cluster rate (capped at 1).
std::vector<std::size_t> ks_for_layer_cr(const Architecture& arch, double target, unsigned weight_bits,
                                         double first_layer_factor = 4.0);

/// Regulariser configuration matching the K and sparsity a ShareConfig would use.
RegConfig reg_config_for(const Architecture& arch, const ShareConfig& share, double lambda,
                         std::size_t refresh_every_epochs);

/// Regularised retraining from `baseline`; the result is rounded to float32.
ModelParams retrain(const ModelParams& baseline, const Dataset& train_set, const TrainConfig& config,
                    const RegConfig& reg, const EpochCallback& on_epoch = {});

/// train -> (retrain with the regulariser -> share -> evaluate) and, on a
/// separate branch, share the baseline directly -> evaluate. `baseline` skips
/// the first stage when given. Stage failures surface as PipelineStageError.
PipelineReport run_pipeline(const Dataset& train_set, const Dataset& test_set, const Architecture& arch,
                            const PipelineConfig& config, const StageLog& log = {},
                            const std::optional<ModelParams>& baseline = std::nullopt);

/// Fixed-column text table, one row per point.
std::string format_pipeline_report(const PipelineReport& report);

}  // namespace dkm
