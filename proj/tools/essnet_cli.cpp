// Command-line entry point: dataset generation, training, inference,
// evaluation and the four-method comparison.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "essnet/checkpoint.hpp"
#include "essnet/comparison.hpp"
#include "essnet/config.hpp"
#include "essnet/dataset_io.hpp"
#include "essnet/dice.hpp"
#include "essnet/errors.hpp"
#include "essnet/grad_check.hpp"
#include "essnet/png_export.hpp"
#include "essnet/report.hpp"
#include "essnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace essnet;

namespace {

// Flags shared by every subcommand. Unset flags stay out of the override
// object so file values survive.
struct CommonFlags {
  std::string config, preset, out, dataset, mode, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> l1, l2, l3, l4, l5, lr_g, lr_d;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Flat JSON config file");
    app->add_option("--preset", preset, "desk | paper-parity");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--out", out, "Output directory");
    app->add_option("--dataset", dataset, "Dataset directory (default <out>/data)");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--mode", mode,
                    "essnet | two_stage_synthesis | two_stage_seg | seg_only");
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory");
    app->add_option("--lambda-gan-ab", l1, "Weight of the G1/D1 adversarial term");
    app->add_option("--lambda-gan-ba", l2, "Weight of the G2/D2 adversarial term");
    app->add_option("--lambda-cycle-a", l3, "Weight of the A-cycle term");
    app->add_option("--lambda-cycle-b", l4, "Weight of the B-cycle term");
    app->add_option("--lambda-seg", l5, "Weight of the segmentation term");
    app->add_option("--lr-g", lr_g, "Learning rate of G1, G2 and S");
    app->add_option("--lr-d", lr_d, "Learning rate of D1 and D2");
  }

  RunConfig resolve() const {
    json o = json::object();
    if (!preset.empty()) o["preset"] = preset;
    if (!out.empty()) o["out_dir"] = out;
    if (!dataset.empty()) o["dataset_dir"] = dataset;
    if (!mode.empty()) o["mode"] = mode;
    if (!checkpoint.empty()) o["checkpoint"] = checkpoint;
    if (seed) o["seed"] = *seed;
    if (epochs) o["epochs"] = *epochs;
    if (l1) o["lambda_1"] = *l1;
    if (l2) o["lambda_2"] = *l2;
    if (l3) o["lambda_3"] = *l3;
    if (l4) o["lambda_4"] = *l4;
    if (l5) o["lambda_5"] = *l5;
    if (lr_g) o["lr_g"] = *lr_g;
    if (lr_d) o["lr_d"] = *lr_d;
    std::optional<fs::path> file;
    if (!config.empty()) file = config;
    RunConfig c = resolve_config(file, o);
    write_resolved(c);
    return c;
  }
};

void say(const std::string& line) { std::cout << line << std::endl; }

DatasetBundle open_dataset(const RunConfig& c) {
  const fs::path dir = c.resolved_dataset_dir();
  if (!fs::exists(dir / "manifest.json"))
    throw DataError("no dataset at " + dir.string() + " (run gen-data first)");
  return load_dataset(dir);
}

const Split& pick_split(const DatasetBundle& d, const std::string& name) {
  if (name == "a_train") return d.a_train;
  if (name == "a_val") return d.a_val;
  if (name == "b_oracle") return d.b_oracle;
  if (name == "b_val") return d.b_val;
  if (name == "b_test") return d.b_test;
  throw ConfigError("unknown split '" + name +
                    "' (a_train, a_val, b_oracle, b_val, b_test; b_train labels are sequestered)");
}

fs::path require_checkpoint(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("missing required field 'checkpoint'");
  return c.checkpoint;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_gen_data(const CommonFlags& f) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = build_dataset(c.data);
  save_dataset(c.resolved_dataset_dir(), d);
  say("dataset written to " + c.resolved_dataset_dir().string() + " (a_train " +
      std::to_string(d.a_train.size()) + ", b_train " + std::to_string(d.b_train.size()) +
      ", b_test " + std::to_string(d.b_test.size()) + ")");
  return 0;
}

int cmd_train(const CommonFlags& f, bool resume) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = open_dataset(c);
  Trainer t(c.train);
  const fs::path latest = c.out_dir / "checkpoints" / "latest";
  if (resume && fs::exists(latest / "manifest.json")) {
    t.restore(load_checkpoint(latest));
    say("resuming after epoch " + std::to_string(t.epoch()));
  }
  const TrainingRun run = t.train(d);
  for (const auto& r : run.records)
    say("epoch " + std::to_string(r.epoch) + " total " + fixed(r.losses.total) +
        " val_dice " + fixed(r.val_dice));
  if (run.best) say("best epoch " + std::to_string(run.best->epoch()));
  say("b_train label reads: " + std::to_string(d.b_train.label_reads()));
  return 0;
}

int cmd_translate(const CommonFlags& f, const std::string& split_name) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = open_dataset(c);
  const Checkpoint ck = load_checkpoint(require_checkpoint(c));
  const Split& split = pick_split(d, split_name);
  const Network<float> g = restore_network(ck, split.modality == Modality::A ? Role::G1 : Role::G2);
  const fs::path dir = c.out_dir / "translated" / split_name;
  ensure_dir(dir);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Image out = translate(g, split.images[i]);
    char name[32];
    std::snprintf(name, sizeof name, "%03zu", i);
    write_f32(dir / (std::string(name) + ".f32"), out.pixels);
    export_png(out, dir / (std::string(name) + ".png"));
  }
  say("translated " + std::to_string(split.size()) + " images into " + dir.string());
  return 0;
}

int cmd_segment(const CommonFlags& f, const std::string& split_name) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = open_dataset(c);
  const Network<float> s = restore_network(load_checkpoint(require_checkpoint(c)), Role::S);
  const Split& split = pick_split(d, split_name);
  const fs::path dir = c.out_dir / "segmented" / split_name;
  ensure_dir(dir);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const LabelMap lab = infer_segmentation(s, split.images[i]);
    char name[32];
    std::snprintf(name, sizeof name, "%03zu", i);
    export_png(lab, dir / (std::string(name) + ".png"));
  }
  say("segmented " + std::to_string(split.size()) + " images into " + dir.string());
  return 0;
}

int cmd_evaluate(const CommonFlags& f, const std::string& split_name) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = open_dataset(c);
  const Network<float> s = restore_network(load_checkpoint(require_checkpoint(c)), Role::S);
  const Split& split = pick_split(d, split_name);
  const auto results = evaluate_segmenter(s, split);
  std::string csv = "image_id,class_id,class_name,dice\n";
  std::vector<double> spleen;
  for (const auto& r : results) {
    spleen.push_back(r.spleen());
    for (std::size_t k = 0; k < r.per_class.size(); ++k)
      csv += r.image_id + "," + std::to_string(k) + "," + class_name(static_cast<int>(k)) +
             "," + fixed(r.per_class[k]) + "\n";
  }
  write_text(c.out_dir / ("eval_" + split_name + ".csv"), csv);
  say("spleen dice median " + fixed(median(spleen)) + " over " +
      std::to_string(spleen.size()) + " images");
  return 0;
}

int cmd_compare(const CommonFlags& f) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = fs::exists(c.resolved_dataset_dir() / "manifest.json")
                              ? load_dataset(c.resolved_dataset_dir())
                              : build_dataset(c.data);
  ComparisonConfig cc;
  cc.train = c.train;
  cc.out_dir = c.out_dir / "methods";
  cc.log = say;
  const ComparisonReport report = run_comparison(d, cc);
  emit_report(report, c.out_dir / "report");
  for (const auto& m : report.methods)
    say(m.name + " median " + fixed(m.median) + " mean " + fixed(m.mean));
  const DirectionalCheck chk = directional_check(report);
  say(std::string("essnet - source_only mean >= 0.15: ") + (chk.beats_source_only ? "yes" : "no"));
  say(std::string("essnet median >= two_stage median: ") + (chk.beats_two_stage ? "yes" : "no"));
  say(std::string("essnet within 0.05 of oracle_target: ") + (chk.near_oracle ? "yes" : "no"));
  say("b_train label reads: " + std::to_string(d.b_train.label_reads()));
  return 0;
}

int cmd_grad_check(const CommonFlags& f, int samples, double h, double tol) {
  const RunConfig c = f.resolve();
  GradCheckConfig g;
  g.samples = samples;
  g.h = h;
  g.tolerance = tol;
  g.seed = c.seed;
  g.weights = c.train.weights;
  g.options = c.train.loss;
  const GradAudit a = grad_check(g);
  json out = {{"samples", a.entries.size()},
              {"pass_fraction", a.pass_fraction},
              {"max_rel_error", a.max_rel_error},
              {"median_rel_error", a.median_rel_error},
              {"h", h},
              {"tolerance", tol},
              {"seconds", a.seconds}};
  write_text(c.out_dir / "grad_check.json", out.dump(2) + "\n");
  say(out.dump());
  return 0;
}

int cmd_montage(const CommonFlags& f, const std::string& split_name) {
  const RunConfig c = f.resolve();
  const DatasetBundle d = open_dataset(c);
  const Checkpoint ck = load_checkpoint(require_checkpoint(c));
  const Network<float> s = restore_network(ck, Role::S);
  std::optional<Network<float>> g1;
  if (ck.meta.contains("networks") && ck.meta["networks"].contains("G1"))
    g1 = restore_network(ck, Role::G1);
  const Split& split = pick_split(d, split_name);
  std::vector<LabelMap> preds;
  const auto results = evaluate_segmenter(s, split, &preds);
  std::vector<double> spleen;
  for (const auto& r : results) spleen.push_back(r.spleen());
  const Split& src = d.a_val.size() ? d.a_val : d.a_train;
  std::vector<MontageRow> rows;
  for (std::size_t i : representative_indices(spleen)) {
    std::optional<Image> synth;
    if (g1) synth = translate(*g1, src.images[i % src.size()]);
    rows.push_back(montage_row(split.images[i], synth ? &*synth : nullptr, preds[i],
                               split.labels[i]));
  }
  const Gray8 m = compose_montage(rows, split.images[0].height, split.images[0].width);
  const fs::path path = c.out_dir / ("montage_" + split_name + ".png");
  write_png_gray8(path, m.width, m.height, m.pixels);
  say("montage written to " + path.string());
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int fail(const char* kind, int code, const std::string& msg) {
  std::cerr << "error=" << kind << " exit=" << code << " reason=" << one_line(msg) << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"essnet: unpaired cross-modality synthesis and segmentation"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string split = "b_test";
  bool resume = false;
  int samples = 200;
  double h = 1e-3, tol = 1e-3;

  auto* gen = app.add_subcommand("gen-data", "Generate and save the synthetic dataset");
  auto* train = app.add_subcommand("train", "Train one mode");
  train->add_flag("--resume", resume, "Continue from <out>/checkpoints/latest");
  auto* tr = app.add_subcommand("translate", "Translate a split with G1 (A) or G2 (B)");
  auto* seg = app.add_subcommand("segment", "Segment a split with S only");
  auto* ev = app.add_subcommand("evaluate", "Score S on a labeled split");
  auto* cmp = app.add_subcommand("compare", "Train and compare all four methods");
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient audit");
  gc->add_option("--samples", samples, "Parameters sampled");
  gc->add_option("--step", h, "Central-difference step");
  gc->add_option("--tol", tol, "Relative-error tolerance");
  auto* mon = app.add_subcommand("montage", "Lowest/median/highest Dice montage");
  for (CLI::App* sub : {gen, train, tr, seg, ev, cmp, gc, mon}) flags.attach(sub);
  for (CLI::App* sub : {tr, seg, ev, mon}) sub->add_option("--split", split, "Split name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", 2, e.what());
  }

  try {
    if (gen->parsed()) return cmd_gen_data(flags);
    if (train->parsed()) return cmd_train(flags, resume);
    if (tr->parsed()) return cmd_translate(flags, split);
    if (seg->parsed()) return cmd_segment(flags, split);
    if (ev->parsed()) return cmd_evaluate(flags, split);
    if (cmp->parsed()) return cmd_compare(flags);
    if (gc->parsed()) return cmd_grad_check(flags, samples, h, tol);
    if (mon->parsed()) return cmd_montage(flags, split);
  } catch (const ConfigError& e) {
    return fail("config", 2, e.what());
  } catch (const DataError& e) {
    return fail("data", 3, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", 4, e.what());
  } catch (const IoError& e) {
    return fail("io", 5, e.what());
  } catch (const std::exception& e) {
    return fail("io", 5, e.what());
  }
  return 0;
}
