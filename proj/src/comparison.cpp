#include "essnet/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "essnet/errors.hpp"

namespace essnet {

namespace fs = std::filesystem;

const MethodResult& ComparisonReport::method(const std::string& name) const {
  for (const auto& m : methods)
    if (m.name == name) return m;
  throw DataError("comparison report has no method '" + name + "'");
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<DiceResult> evaluate_segmenter(const Network<float>& segmenter,
                                           const Split& split,
                                           std::vector<LabelMap>* predictions) {
  std::vector<DiceResult> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    LabelMap pred = infer_segmentation(segmenter, split.images[i]);
    char id[64];
    std::snprintf(id, sizeof id, "%s/%03zu", split.name.c_str(), i);
    out.push_back(dice_multiclass(pred, split.labels[i], {}, id));
    if (predictions) predictions->push_back(std::move(pred));
  }
  return out;
}

void summarize(ComparisonReport& report) {
  for (auto& m : report.methods) {
    m.spleen.clear();
    for (const auto& d : m.per_image) m.spleen.push_back(d.spleen());
    m.median = median(m.spleen);
    m.mean = std::accumulate(m.spleen.begin(), m.spleen.end(), 0.0) /
             static_cast<double>(m.spleen.size());
  }
  report.pairs.clear();
  for (std::size_t i = 0; i < report.methods.size(); ++i)
    for (std::size_t j = i + 1; j < report.methods.size(); ++j) {
      PairwiseTest t{report.methods[i].name, report.methods[j].name, {}, {}};
      try {
        t.outcome = wilcoxon_signed_rank(report.methods[i].spleen,
                                         report.methods[j].spleen);
      } catch (const DataError& e) {
        t.error = e.what();
      }
      report.pairs.push_back(std::move(t));
    }
}

namespace {

void note(const ComparisonConfig& c, const std::string& msg) {
  if (c.log) c.log(msg);
}

MethodResult score(const std::string& name, const Network<float>& s,
                   const DatasetBundle& data, int best_epoch) {
  MethodResult r;
  r.name = name;
  r.per_image = evaluate_segmenter(s, data.b_test, &r.predictions);
  r.best_epoch = best_epoch;
  r.label_reads = data.b_train.label_reads();
  return r;
}

// G1 applied to source images, one per test row (cycled).
std::vector<Image> synthesize(const Network<float>& g1, const DatasetBundle& data) {
  const Split& src = data.a_val.size() ? data.a_val : data.a_train;
  std::vector<Image> out;
  for (std::size_t i = 0; i < data.b_test.size(); ++i)
    out.push_back(translate(g1, src.images[i % src.size()]));
  return out;
}

}  // namespace

ComparisonReport run_comparison(const DatasetBundle& data,
                                const ComparisonConfig& config) {
  if (data.b_test.size() == 0) throw DataError("comparison needs a non-empty b_test split");
  ComparisonReport report;
  report.seed = config.train.seed;
  report.epochs = config.train.epochs;
  report.test_images = data.b_test.images;
  report.test_labels = data.b_test.labels;
  for (std::size_t i = 0; i < data.b_test.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s/%03zu", data.b_test.name.c_str(), i);
    report.image_ids.emplace_back(id);
  }

  fs::path root = config.out_dir;
  bool temp_root = false;
  if (root.empty()) {
    root = fs::temp_directory_path() /
           ("essnet-compare-" + std::to_string(config.train.seed) + "-" +
            std::to_string(std::hash<std::string>{}(fs::current_path().string())));
    temp_root = true;
  }
  auto method_config = [&](TrainMode mode, const std::string& sub) {
    TrainConfig c = config.train;
    c.mode = mode;
    c.out_dir = root / sub;
    c.synthesis_checkpoint.clear();
    return c;
  };
  auto run_seg = [&](const std::string& name, TrainConfig c) {
    note(config, "training " + name);
    Trainer t(std::move(c));
    const TrainingRun run = t.train(data);
    const Checkpoint best = select_best_epoch(run);
    MethodResult r = score(name, restore_network(best, Role::S), data, best.epoch());
    if (t.config().mode == TrainMode::kTwoStageSeg || t.config().mode == TrainMode::kEssNet)
      r.synthesized = synthesize(restore_network(best, Role::G1), data);
    note(config, name + ": best epoch " + std::to_string(r.best_epoch));
    return r;
  };

  try {
    TrainConfig source = method_config(TrainMode::kSegOnly, "source_only");
    source.seg_only_modality = Modality::A;
    report.methods.push_back(run_seg("source_only", source));

    TrainConfig oracle = method_config(TrainMode::kSegOnly, "oracle_target");
    oracle.seg_only_modality = Modality::B;
    report.methods.push_back(run_seg("oracle_target", oracle));

    note(config, "training two_stage synthesis");
    TrainConfig synth = method_config(TrainMode::kTwoStageSynthesis, "two_stage/synthesis");
    {
      Trainer t(synth);
      const TrainingRun run = t.train(data);
      // No labels exist for selecting a synthesis epoch, so the last one is used.
      save_checkpoint(synth.out_dir / "final", *run.last);
    }
    TrainConfig seg = method_config(TrainMode::kTwoStageSeg, "two_stage/segmentation");
    seg.synthesis_checkpoint = synth.out_dir / "final";
    report.methods.push_back(run_seg("two_stage", seg));

    report.methods.push_back(run_seg("essnet", method_config(TrainMode::kEssNet, "essnet")));
  } catch (...) {
    if (temp_root) fs::remove_all(root);
    throw;
  }
  if (temp_root) fs::remove_all(root);

  summarize(report);
  return report;
}

DirectionalCheck directional_check(const ComparisonReport& report) {
  const MethodResult& ess = report.method("essnet");
  DirectionalCheck c;
  c.essnet_mean = ess.mean;
  c.essnet_median = ess.median;
  c.source_only_mean = report.method("source_only").mean;
  c.two_stage_median = report.method("two_stage").median;
  c.oracle_median = report.method("oracle_target").median;
  c.beats_source_only = c.essnet_mean - c.source_only_mean >= 0.15;
  c.beats_two_stage = c.essnet_median >= c.two_stage_median;
  c.near_oracle = std::fabs(c.essnet_median - c.oracle_median) <= 0.05;
  return c;
}

}  // namespace essnet
