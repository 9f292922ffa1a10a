#include "ctxforest_cli/cli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxforest/cascade.hpp"
#include "ctxforest/config.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/eval.hpp"
#include "ctxforest/graphcut.hpp"
#include "ctxforest/parallel.hpp"
#include "ctxforest/phantom.hpp"

namespace ctxforest::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr std::array<const char*, 3> kProbNames = {"femoral", "tibial", "patellar"};

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_config_flags(CLI::App& cmd, ConfigFlags& f) {
  cmd.add_option("--config", f.config_path, "JSON config file");
  cmd.add_option("--set", f.overrides, "Config override key=value (repeatable, wins over --config)");
  cmd.add_option("--seed", f.seed, "Master seed");
  cmd.add_option("--threads", f.threads, "Worker threads (default: CTXFOREST_THREADS or all cores)");
}

std::size_t threads_from_env() {
  const char* env = std::getenv("CTXFOREST_THREADS");
  if (!env || !*env) return 0;
  try {
    return static_cast<std::size_t>(std::stoul(env));
  } catch (const std::exception&) {
    throw UsageError(std::string("CTXFOREST_THREADS is not a number: ") + env);
  }
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg = f.config_path.empty() ? RunConfig{} : load_config(f.config_path);
  for (const std::string& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  else if (cfg.threads == 0) cfg.threads = threads_from_env();
  validate_config(cfg);
  set_num_threads(cfg.threads);
  return cfg;
}

void apply_threads(std::optional<std::size_t> flag) { set_num_threads(flag ? *flag : threads_from_env()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void write_log(const fs::path& path, const std::string& command, const RunConfig* cfg, const ordered_json& io) {
  ordered_json j;
  j["command"] = command;
  if (cfg) {
    j["config"] = ordered_json::parse(config_to_json(*cfg));
    j["config_hash"] = hex64(config_hash(*cfg));
  }
  j["io"] = io;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// "64" or "64,64,64" (also accepts 'x' as separator).
std::vector<std::string> split_triple(std::string text, const std::string& what) {
  std::replace(text.begin(), text.end(), 'x', ',');
  std::vector<std::string> parts;
  std::istringstream in(text);
  for (std::string p; std::getline(in, p, ',');) parts.push_back(p);
  if (parts.size() == 1) parts = {parts[0], parts[0], parts[0]};
  if (parts.size() != 3) throw UsageError(what + " expects N or NX,NY,NZ");
  return parts;
}

Dims parse_dims(const std::string& text) {
  const auto p = split_triple(text, "--dims");
  try {
    return {std::stoi(p[0]), std::stoi(p[1]), std::stoi(p[2])};
  } catch (const std::exception&) {
    throw UsageError("--dims expects integers, got '" + text + "'");
  }
}

Vec3 parse_spacing(const std::string& text) {
  const auto p = split_triple(text, "--spacing");
  try {
    return {std::stod(p[0]), std::stod(p[1]), std::stod(p[2])};
  } catch (const std::exception&) {
    throw UsageError("--spacing expects numbers, got '" + text + "'");
  }
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  fs::path stem = path;
  stem.replace_extension();
  return stem.string() + suffix;
}

// ---------------------------------------------------------------- phantom

struct PhantomArgs {
  std::string out;
  int subjects = 9;
  std::uint64_t seed = 7;
  std::string dims = "64";
  std::string spacing = "1";
  int visits = 2;
  std::optional<double> noise;
  std::optional<double> bias;
  std::optional<std::size_t> threads;
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  apply_threads(a.threads);
  if (a.subjects < 1) throw UsageError("--subjects must be >= 1");
  if (a.visits < 1) throw UsageError("--visits must be >= 1");
  PhantomSpec spec = default_phantom_spec(parse_dims(a.dims), parse_spacing(a.spacing), a.seed);
  if (a.noise) spec.noise_std = *a.noise;
  if (a.bias) spec.bias_amplitude = *a.bias;
  const Manifest m = generate_dataset(spec, a.subjects, a.out, a.visits);

  ordered_json j;
  j["seed"] = spec.seed;
  j["dims"] = {spec.dims.nx, spec.dims.ny, spec.dims.nz};
  j["spacing"] = {spec.spacing.x, spec.spacing.y, spec.spacing.z};
  j["subjects"] = a.subjects;
  j["volumes_per_subject"] = a.visits;
  j["noise_std"] = spec.noise_std;
  j["bias_amplitude"] = spec.bias_amplitude;
  j["thickness_mm"] = {spec.thickness_min_mm, spec.thickness_max_mm};
  j["landmarks_per_bone"] = spec.landmarks_per_bone;
  j["manifest"] = "manifest.csv";
  write_log(fs::path(a.out) / "phantom.json", "phantom", nullptr, j);
  out << "wrote " << m.entries.size() << " volumes of " << a.subjects << " subjects to " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string model;
  std::vector<int> exclude;
  ConfigFlags cfg;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.cfg);
  const Manifest m = load_manifest(a.manifest);
  const std::set<int> excluded(a.exclude.begin(), a.exclude.end());
  std::vector<TrainingCase> cases;
  for (EvalCase& c : load_dataset(m)) {
    if (!excluded.count(c.subject)) cases.push_back(std::move(c.data));
  }
  if (cases.empty()) throw ValidationError("no training volumes left after --exclude");
  const CascadeModel model = train_cascade(cases, cfg.cascade, cfg.seed);
  save_cascade(model, a.model);

  ordered_json io;
  io["manifest"] = a.manifest;
  io["excluded_subjects"] = a.exclude;
  io["training_volumes"] = cases.size();
  io["model"] = a.model;
  write_log(with_suffix(a.model, ".config.json"), "train", &cfg, io);
  out << "trained " << model.passes.size() << "-pass cascade on " << cases.size() << " volumes -> " << a.model
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string volume;
  std::string bones;
  std::string landmarks;
  std::string out_prefix;
  std::optional<std::size_t> threads;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  if (a.model.empty()) throw UsageError("predict requires --model");
  apply_threads(a.threads);
  const CascadeModel model = load_cascade(a.model);
  const Volume intensity = load_volume(a.volume);
  const LabelVolume bones = load_label_volume(a.bones);
  const std::vector<LandmarkSet> landmarks = load_landmarks(a.landmarks);
  require_same_geometry(intensity.geometry(), bones.geometry(), "bone mask vs volume");

  const Vec3 s = intensity.geometry().spacing;
  if (!(s == model.train_spacing)) {
    err << "warning: volume spacing (" << s.x << ", " << s.y << ", " << s.z << ") differs from training spacing ("
        << model.train_spacing.x << ", " << model.train_spacing.y << ", " << model.train_spacing.z
        << "); features are in mm, continuing\n";
  }

  const FeatureContext ctx = precompute_context(intensity, bones, landmarks);
  const Band band = band_for(ctx, model.config.forest.features);
  if (band.empty()) throw ValidationError("empty band of interest in " + a.volume);
  const ProbMaps probs = infer_cascade_passes(model, ctx, band).back();

  ordered_json io;
  io["model"] = a.model;
  io["volume"] = a.volume;
  io["bones"] = a.bones;
  io["landmarks"] = a.landmarks;
  for (std::size_t c = 0; c < 3; ++c) {
    const fs::path p = a.out_prefix + "_prob_" + kProbNames[c] + ".mhd";
    save_volume(probs[c], p);
    io["outputs"].push_back(p.string());
  }
  save_label_volume(band.to_mask(), a.out_prefix + "_band.mhd");
  save_label_volume(argmax_labeling(probs, band), a.out_prefix + "_argmax.mhd");
  io["outputs"].push_back(a.out_prefix + "_band.mhd");
  io["outputs"].push_back(a.out_prefix + "_argmax.mhd");

  RunConfig resolved;
  resolved.cascade = model.config;
  write_log(a.out_prefix + "_predict.json", "predict", &resolved, io);
  out << "predicted " << band.size() << " band voxels -> " << a.out_prefix << "_*\n";
  return kExitOk;
}

// ---------------------------------------------------------------- refine

struct RefineArgs {
  std::string pred_prefix;
  std::string volume;
  std::string out;
  std::string energy_log;
  ConfigFlags cfg;
};

int cmd_refine(const RefineArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.cfg);
  const Volume intensity = load_volume(a.volume);
  ProbMaps probs;
  for (std::size_t c = 0; c < 3; ++c) probs[c] = load_volume(a.pred_prefix + "_prob_" + kProbNames[c] + ".mhd");
  const Band band = Band::from_mask(load_label_volume(a.pred_prefix + "_band.mhd"));
  const LabelVolume init = load_label_volume(a.pred_prefix + "_argmax.mhd");
  require_same_geometry(intensity.geometry(), band.geometry(), "band vs volume");
  require_same_geometry(intensity.geometry(), init.geometry(), "initial labels vs volume");
  for (const Volume& p : probs) require_same_geometry(intensity.geometry(), p.geometry(), "probabilities vs volume");

  const ExpansionResult r = alpha_expansion(probs, intensity, band, init, cfg.energy);
  for (std::size_t k = 1; k < r.energy_trace.size(); ++k) {
    if (r.energy_trace[k] > r.energy_trace[k - 1]) {
      throw std::logic_error("energy increased during refinement at move " + std::to_string(k));
    }
  }
  save_label_volume(r.labels, a.out);
  const fs::path log = a.energy_log.empty() ? with_suffix(a.out, "_energy.txt") : fs::path(a.energy_log);
  write_energy_log(r, log);

  ordered_json io;
  io["pred_prefix"] = a.pred_prefix;
  io["volume"] = a.volume;
  io["labels"] = a.out;
  io["energy_log"] = log.string();
  io["moves"] = r.move_labels.size();
  write_log(with_suffix(a.out, "_refine.json"), "refine", &cfg, io);
  out << "energy " << r.energy_trace.front() << " -> " << r.energy_trace.back() << " in " << r.cycle_energies.size()
      << " cycles -> " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> gt;
  std::string manifest;
  int folds = 3;
  bool ablation = false;
  std::string out;
  std::string gnuplot_dir;
  ConfigFlags cfg;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(a.cfg);
  std::vector<EvalReport> reports;
  ordered_json io;
  if (!a.manifest.empty()) {
    if (!a.pred.empty() || !a.gt.empty()) throw UsageError("--manifest cannot be combined with --pred/--gt");
    const auto cases = load_dataset(load_manifest(a.manifest));
    io["manifest"] = a.manifest;
    io["folds"] = a.folds;
    io["ablation"] = a.ablation;
    if (a.ablation) reports = ablation(cases, cfg, a.folds, cfg.seed);
    else reports.push_back(cross_validate(cases, cfg, a.folds, cfg.seed));
  } else {
    if (a.pred.empty()) throw UsageError("eval needs --manifest or --pred/--gt pairs");
    if (a.pred.size() != a.gt.size()) throw UsageError("--pred and --gt must be given the same number of times");
    if (a.ablation) throw UsageError("--ablation needs --manifest");
    EvalReport rep;
    rep.name = "predictions";
    rep.config_hash = config_hash(cfg);
    rep.num_folds = 1;
    for (std::size_t i = 0; i < a.pred.size(); ++i) {
      const LabelVolume pred = load_label_volume(a.pred[i]);
      const LabelVolume gt = load_label_volume(a.gt[i]);
      for (std::size_t v = 0; v < pred.size(); ++v) {
        if (pred[v] >= kNumClasses) throw ValidationError("prediction " + a.pred[i] + " has labels outside {bg,F,T,P}");
      }
      for (std::uint8_t label = 1; label < kNumClasses; ++label) {
        rep.rows.push_back({0, static_cast<int>(i), 0, label, dsc(pred, gt, label)});
      }
    }
    io["pred"] = a.pred;
    io["gt"] = a.gt;
    reports.push_back(std::move(rep));
  }
  write_csv(reports, a.out);
  std::string text;
  for (const EvalReport& r : reports) text += format_report(r) + '\n';
  if (reports.size() > 1) text += format_comparison(reports);
  {
    std::ofstream txt(with_suffix(a.out, ".txt"));
    if (!txt) throw IoError("cannot write report next to " + a.out);
    txt << text;
  }
  io["csv"] = a.out;
  if (!a.gnuplot_dir.empty()) {
    write_gnuplot(reports, a.gnuplot_dir);
    io["gnuplot_dir"] = a.gnuplot_dir;
  }
  write_log(with_suffix(a.out, ".config.json"), "eval", &cfg, io);
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string model;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const CascadeModel model = load_cascade(a.model);
  const auto freq = feature_frequency(model);
  out << "model " << a.model << ": " << model.passes.size() << " pass(es), train spacing (" << model.train_spacing.x
      << ", " << model.train_spacing.y << ", " << model.train_spacing.z << ")\n";
  for (std::size_t p = 0; p < model.passes.size(); ++p) {
    const RandomForest& f = model.passes[p];
    std::map<int, std::size_t> depths;
    std::size_t internal = 0;
    for (const Tree& t : f.trees()) {
      ++depths[t.depth()];
      internal += t.internal_count();
    }
    out << "pass " << p + 1 << ": " << f.trees().size() << " trees, " << internal << " internal nodes\n";
    out << "  depth histogram:";
    for (const auto& [d, n] : depths) out << ' ' << d << ':' << n;
    out << "\n  feature frequency:\n";
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
      const auto kind = static_cast<FeatureKind>(k);
      const auto it = freq[p].find(kind);
      char line[64];
      std::snprintf(line, sizeof line, "    %-13s %zu\n", std::string(feature_kind_name(kind)).c_str(),
                    it == freq[p].end() ? std::size_t{0} : it->second);
      out << line;
    }
  }
  RunConfig cfg;
  cfg.cascade = model.config;
  out << "config " << config_to_json(cfg);
  return kExitOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kExitUsage;
    case ErrorKind::Io:
      return kExitIo;
    case ErrorKind::Validation:
      return kExitValidation;
  }
  return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cartilage segmentation with semantic context forests"};
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* c_phantom = app.add_subcommand("phantom", "Generate a synthetic knee dataset with a manifest");
  c_phantom->add_option("--out", phantom.out, "Output directory")->required();
  c_phantom->add_option("--subjects", phantom.subjects, "Number of subjects");
  c_phantom->add_option("--seed", phantom.seed, "Master seed");
  c_phantom->add_option("--dims", phantom.dims, "Grid size: N or NX,NY,NZ");
  c_phantom->add_option("--spacing", phantom.spacing, "Voxel spacing in mm: S or SX,SY,SZ");
  c_phantom->add_option("--visits", phantom.visits, "Volumes per subject");
  c_phantom->add_option("--noise", phantom.noise, "Noise standard deviation");
  c_phantom->add_option("--bias", phantom.bias, "Bias-field amplitude (fraction)");
  c_phantom->add_option("--threads", phantom.threads, "Worker threads");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a cascade on a manifest");
  c_train->add_option("--manifest", train.manifest, "Dataset manifest")->required();
  c_train->add_option("--model", train.model, "Output model file")->required();
  c_train->add_option("--exclude", train.exclude, "Subject ids left out of training")->delimiter(',');
  add_config_flags(*c_train, train.cfg);

  PredictArgs predict;
  auto* c_predict = app.add_subcommand("predict", "Cartilage probability maps for one volume");
  c_predict->add_option("--model", predict.model, "Cascade model");
  c_predict->add_option("--volume", predict.volume, "Intensity volume (.mhd)")->required();
  c_predict->add_option("--bones", predict.bones, "Bone label volume (.mhd)")->required();
  c_predict->add_option("--landmarks", predict.landmarks, "Landmark CSV")->required();
  c_predict->add_option("--out-prefix", predict.out_prefix, "Prefix of output files")->required();
  c_predict->add_option("--threads", predict.threads, "Worker threads");

  RefineArgs refine;
  auto* c_refine = app.add_subcommand("refine", "Graph-cut refinement of predict outputs");
  c_refine->add_option("--pred-prefix", refine.pred_prefix, "Prefix given to predict")->required();
  c_refine->add_option("--volume", refine.volume, "Intensity volume (.mhd)")->required();
  c_refine->add_option("--out", refine.out, "Output label volume (.mhd)")->required();
  c_refine->add_option("--energy-log", refine.energy_log, "Energy trace file (default <out>_energy.txt)");
  add_config_flags(*c_refine, refine.cfg);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "DSC report for predictions or grouped cross-validation");
  c_eval->add_option("--pred", eval.pred, "Predicted label volume (repeatable)");
  c_eval->add_option("--gt", eval.gt, "Ground-truth label volume (repeatable)");
  c_eval->add_option("--manifest", eval.manifest, "Run cross-validation on this manifest");
  c_eval->add_option("--folds", eval.folds, "Number of folds");
  c_eval->add_flag("--ablation", eval.ablation, "Evaluate the six pipeline variants");
  c_eval->add_option("--out", eval.out, "CSV report")->required();
  c_eval->add_option("--emit-gnuplot", eval.gnuplot_dir, "Directory for gnuplot data and scripts");
  add_config_flags(*c_eval, eval.cfg);

  InspectArgs inspect;
  auto* c_inspect = app.add_subcommand("inspect", "Summarize a cascade model");
  c_inspect->add_option("--model", inspect.model, "Cascade model")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_phantom->parsed()) return cmd_phantom(phantom, out);
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_predict->parsed()) return cmd_predict(predict, out, err);
    if (c_refine->parsed()) return cmd_refine(refine, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_inspect->parsed()) return cmd_inspect(inspect, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}

}  // namespace ctxforest::cli
