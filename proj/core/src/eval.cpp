#include "ctxforest/eval.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/graphcut.hpp"
#include "ctxforest/parallel.hpp"
#include "ctxforest/rng.hpp"

namespace ctxforest {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string class_name(std::uint8_t label) { return cartilage_palette().at(label); }

ClassStats summarize(const std::vector<double>& values) {
  ClassStats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

RunConfig variant_config(const RunConfig& base, const PipelineVariant& v) {
  RunConfig c = base;
  c.cascade.num_passes = v.passes;
  c.cascade.forest.features.use_landmark_features = v.landmark_features;
  c.refine = v.graph_cut;
  return c;
}

struct VariantOutput {
  std::vector<DscRow> rows;
  std::vector<FeatureCounts> frequency;
  std::vector<std::vector<double>> traces;
};

void add_counts(std::vector<FeatureCounts>& into, const std::vector<FeatureCounts>& from) {
  if (into.size() < from.size()) into.resize(from.size());
  for (std::size_t p = 0; p < from.size(); ++p) {
    for (const auto& [kind, n] : from[p]) into[p][kind] += n;
  }
}

}  // namespace

double dsc(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t label) {
  require_same_geometry(pred.geometry(), gt.geometry(), "prediction vs ground truth");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_a = pred[i] == label;
    const bool in_b = gt[i] == label;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

int FoldPlan::fold_of(int subject) const {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (std::find(folds[f].begin(), folds[f].end(), subject) != folds[f].end()) return static_cast<int>(f);
  }
  throw ValidationError("subject " + std::to_string(subject) + " is not in the fold plan");
}

std::uint64_t FoldPlan::hash() const {
  std::string text;
  for (const auto& fold : folds) {
    for (int s : fold) text += std::to_string(s) + ',';
    text += ';';
  }
  return fnv1a64(text);
}

FoldPlan make_fold_plan(std::vector<int> subjects, int k, std::uint64_t seed) {
  if (k < 1) throw UsageError("fold count must be >= 1");
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("need at least " + std::to_string(k) + " subjects for " + std::to_string(k) +
                          " folds, got " + std::to_string(subjects.size()));
  }
  Rng rng(derive_seed(seed, "folds"));
  for (std::size_t i = subjects.size(); i > 1; --i) std::swap(subjects[i - 1], subjects[rng.below(i)]);
  FoldPlan plan;
  const std::size_t n = subjects.size();
  const auto kk = static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < kk; ++f) {
    const std::size_t size = n / kk + (f < n % kk ? 1 : 0);
    plan.folds.emplace_back(subjects.begin() + static_cast<std::ptrdiff_t>(pos),
                            subjects.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return plan;
}

std::vector<EvalCase> load_dataset(const Manifest& manifest) {
  std::vector<EvalCase> cases;
  std::map<int, int> visits;
  for (const ManifestEntry& e : manifest.entries) {
    EvalCase c;
    c.subject = e.subject_id;
    c.volume = visits[e.subject_id]++;
    c.data.name = e.volume_path;
    c.data.intensity = load_volume(manifest.resolve(e.volume_path));
    c.data.bone_mask = load_label_volume(manifest.resolve(e.bone_mask_path));
    c.data.landmarks = load_landmarks(manifest.resolve(e.landmarks_path));
    c.data.ground_truth = load_label_volume(manifest.resolve(e.gt_path));
    require_same_geometry(c.data.intensity.geometry(), c.data.bone_mask.geometry(), e.bone_mask_path);
    require_same_geometry(c.data.intensity.geometry(), c.data.ground_truth.geometry(), e.gt_path);
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<EvalCase> phantom_dataset(const PhantomSpec& spec, int n_subjects, int volumes_per_subject) {
  std::vector<EvalCase> cases;
  for (int s = 0; s < n_subjects; ++s) {
    for (int v = 0; v < volumes_per_subject; ++v) {
      Phantom p = generate_phantom(spec, s, v);
      EvalCase c;
      c.subject = s;
      c.volume = v;
      c.data.name = "s" + std::to_string(s) + "_v" + std::to_string(v);
      c.data.intensity = std::move(p.intensity);
      c.data.bone_mask = std::move(p.bone_mask);
      c.data.landmarks = std::move(p.landmarks);
      c.data.ground_truth = std::move(p.ground_truth);
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

ClassStats EvalReport::stats(std::uint8_t label, int fold) const {
  std::vector<double> values;
  for (const DscRow& r : rows) {
    if (r.label == label && (fold < 0 || r.fold == fold)) values.push_back(r.dsc);
  }
  return summarize(values);
}

double EvalReport::mean_dsc() const {
  return (stats(kFemoralCartilage).mean + stats(kTibialCartilage).mean + stats(kPatellarCartilage).mean) / 3.0;
}

std::vector<PipelineVariant> ablation_variants() {
  return {
      {"1-pass", 1, false, false},          {"2-pass", 2, false, false},
      {"1-pass+LM", 1, true, false},        {"2-pass+LM", 2, true, false},
      {"3-pass+LM", 3, true, false},        {"2-pass+LM+GC", 2, true, true},
  };
}

std::vector<EvalReport> evaluate_variants(std::span<const EvalCase> cases, const RunConfig& cfg,
                                          std::span<const PipelineVariant> variants, int k, std::uint64_t seed) {
  validate_config(cfg);
  if (variants.empty()) throw UsageError("no pipeline variants to evaluate");
  for (const auto& v : variants) {
    if (v.passes < 1) throw ValidationError("variant '" + v.name + "' needs at least one pass");
  }
  std::vector<int> subjects;
  for (const auto& c : cases) subjects.push_back(c.subject);
  const FoldPlan plan = make_fold_plan(subjects, k, seed);

  // One cascade per landmark setting, deep enough for every variant using it.
  std::map<bool, int> depth_for;
  for (const auto& v : variants) depth_for[v.landmark_features] = std::max(depth_for[v.landmark_features], v.passes);

  const std::size_t n_folds = plan.folds.size();
  std::vector<std::vector<VariantOutput>> per_fold(n_folds, std::vector<VariantOutput>(variants.size()));
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<TrainingCase> train;
    std::vector<const EvalCase*> test;
    for (const auto& c : cases) {
      if (plan.fold_of(c.subject) == static_cast<int>(f)) test.push_back(&c);
      else train.push_back(c.data);
    }
    const std::uint64_t fold_seed = derive_seed(seed, "fold", f);
    for (const auto& [landmarks, passes] : depth_for) {
      CascadeConfig cc = cfg.cascade;
      cc.num_passes = passes;
      cc.forest.features.use_landmark_features = landmarks;
      const CascadeModel model = train_cascade(train, cc, fold_seed);

      std::vector<std::size_t> members;
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        if (variants[vi].landmark_features == landmarks) members.push_back(vi);
      }
      for (std::size_t vi : members) {
        add_counts(per_fold[f][vi].frequency, feature_frequency(truncate_cascade(model, variants[vi].passes)));
      }

      struct CaseResult {
        std::vector<std::vector<DscRow>> rows;
        std::vector<std::vector<double>> traces;
      };
      std::vector<CaseResult> results(test.size());
      parallel_for(test.size(), [&](std::size_t t) {
        const EvalCase& c = *test[t];
        const FeatureContext ctx = precompute_context(c.data.intensity, c.data.bone_mask, c.data.landmarks);
        const Band band = band_for(ctx, cc.forest.features);
        const std::vector<ProbMaps> maps = infer_cascade_passes(model, ctx, band);
        results[t].rows.resize(members.size());
        results[t].traces.resize(members.size());
        for (std::size_t m = 0; m < members.size(); ++m) {
          const PipelineVariant& v = variants[members[m]];
          const ProbMaps& probs = maps[static_cast<std::size_t>(v.passes - 1)];
          LabelVolume labels = argmax_labeling(probs, band);
          if (v.graph_cut) {
            ExpansionResult r = alpha_expansion(probs, c.data.intensity, band, labels, cfg.energy);
            labels = std::move(r.labels);
            results[t].traces[m] = std::move(r.energy_trace);
          }
          for (std::uint8_t label = 1; label < kNumClasses; ++label) {
            results[t].rows[m].push_back(
                {static_cast<int>(f), c.subject, c.volume, label, dsc(labels, c.data.ground_truth, label)});
          }
        }
      });
      for (std::size_t m = 0; m < members.size(); ++m) {
        VariantOutput& out = per_fold[f][members[m]];
        for (const CaseResult& r : results) {
          out.rows.insert(out.rows.end(), r.rows[m].begin(), r.rows[m].end());
          if (variants[members[m]].graph_cut) out.traces.push_back(r.traces[m]);
        }
      }
    }
  }

  std::vector<EvalReport> reports;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    EvalReport rep;
    rep.name = variants[vi].name;
    rep.config_hash = config_hash(variant_config(cfg, variants[vi]));
    rep.fold_hash = plan.hash();
    rep.num_folds = static_cast<int>(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
      const VariantOutput& out = per_fold[f][vi];
      rep.rows.insert(rep.rows.end(), out.rows.begin(), out.rows.end());
      add_counts(rep.feature_frequency, out.frequency);
      rep.energy_traces.insert(rep.energy_traces.end(), out.traces.begin(), out.traces.end());
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

EvalReport cross_validate(std::span<const EvalCase> cases, const RunConfig& cfg, int k, std::uint64_t seed) {
  const PipelineVariant v{"pipeline", cfg.cascade.num_passes, cfg.cascade.forest.features.use_landmark_features,
                          cfg.refine};
  return evaluate_variants(cases, cfg, std::span(&v, 1), k, seed).front();
}

std::vector<EvalReport> ablation(std::span<const EvalCase> cases, const RunConfig& cfg, int k, std::uint64_t seed) {
  const auto variants = ablation_variants();
  return evaluate_variants(cases, cfg, variants, k, seed);
}

void write_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::string out = "fold,subject,volume,class,dsc,config_hash\n";
  char buf[64];
  for (const EvalReport& rep : reports) {
    const std::string hash = hex64(rep.config_hash);
    for (const DscRow& r : rep.rows) {
      std::snprintf(buf, sizeof buf, "%.17g", r.dsc);
      out += std::to_string(r.fold) + ',' + std::to_string(r.subject) + ',' + std::to_string(r.volume) + ',' +
             class_name(r.label) + ',' + buf + ',' + hash + '\n';
    }
  }
  detail::write_file(path.string(), out);
}

std::string format_report(const EvalReport& rep) {
  std::ostringstream os;
  char buf[160];
  os << rep.name << "  config " << hex64(rep.config_hash) << "  folds " << hex64(rep.fold_hash) << '\n';
  std::snprintf(buf, sizeof buf, "%-8s %20s %20s %20s\n", "fold", "femoral", "tibial", "patellar");
  os << buf;
  auto line = [&](const std::string& label, int fold) {
    const ClassStats f = rep.stats(kFemoralCartilage, fold);
    const ClassStats t = rep.stats(kTibialCartilage, fold);
    const ClassStats p = rep.stats(kPatellarCartilage, fold);
    std::snprintf(buf, sizeof buf, "%-8s %11.4f +- %5.4f %11.4f +- %5.4f %11.4f +- %5.4f\n", label.c_str(), f.mean,
                  f.std, t.mean, t.std, p.mean, p.std);
    os << buf;
  };
  for (int f = 0; f < rep.num_folds; ++f) line(std::to_string(f), f);
  line("overall", -1);
  if (!rep.feature_frequency.empty()) {
    os << "feature frequency (internal nodes per pass)\n";
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
      const auto kind = static_cast<FeatureKind>(k);
      std::snprintf(buf, sizeof buf, "  %-13s", std::string(feature_kind_name(kind)).c_str());
      os << buf;
      for (const auto& counts : rep.feature_frequency) {
        const auto it = counts.find(kind);
        std::snprintf(buf, sizeof buf, " %8zu", it == counts.end() ? std::size_t{0} : it->second);
        os << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string format_comparison(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9s\n", "variant", "femoral", "tibial", "patellar", "mean");
  os << buf;
  for (const EvalReport& rep : reports) {
    std::snprintf(buf, sizeof buf, "%-16s %9.4f %9.4f %9.4f %9.4f\n", rep.name.c_str(),
                  rep.stats(kFemoralCartilage).mean, rep.stats(kTibialCartilage).mean,
                  rep.stats(kPatellarCartilage).mean, rep.mean_dsc());
    os << buf;
  }
  return os.str();
}

void write_gnuplot(std::span<const EvalReport> reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string cmp = "# variant femoral tibial patellar\n";
  char buf[160];
  for (const EvalReport& rep : reports) {
    std::snprintf(buf, sizeof buf, "\"%s\" %.6f %.6f %.6f\n", rep.name.c_str(), rep.stats(kFemoralCartilage).mean,
                  rep.stats(kTibialCartilage).mean, rep.stats(kPatellarCartilage).mean);
    cmp += buf;
  }
  detail::write_file((dir / "comparison.dat").string(), cmp);
  detail::write_file((dir / "comparison.gp").string(),
                     "set terminal pngcairo size 900,500\n"
                     "set output 'comparison.png'\n"
                     "set style data histograms\n"
                     "set style fill solid 0.8 border -1\n"
                     "set yrange [0:1]\n"
                     "set ylabel 'DSC'\n"
                     "set xtics rotate by -30\n"
                     "plot 'comparison.dat' using 2:xtic(1) title 'femoral', '' using 3 title 'tibial', "
                     "'' using 4 title 'patellar'\n");

  // Feature frequency of the deepest cascade in the set.
  const EvalReport* deepest = nullptr;
  for (const EvalReport& rep : reports) {
    if (!deepest || rep.feature_frequency.size() > deepest->feature_frequency.size()) deepest = &rep;
  }
  std::string freq = "# kind";
  const std::size_t n_passes = deepest ? deepest->feature_frequency.size() : 0;
  for (std::size_t p = 0; p < n_passes; ++p) freq += " pass" + std::to_string(p + 1);
  freq += '\n';
  for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
    const auto kind = static_cast<FeatureKind>(k);
    freq += std::string(feature_kind_name(kind));
    for (std::size_t p = 0; p < n_passes; ++p) {
      const auto& counts = deepest->feature_frequency[p];
      const auto it = counts.find(kind);
      freq += ' ' + std::to_string(it == counts.end() ? 0 : it->second);
    }
    freq += '\n';
  }
  detail::write_file((dir / "feature_frequency.dat").string(), freq);
  std::string plot =
      "set terminal pngcairo size 900,500\n"
      "set output 'feature_frequency.png'\n"
      "set style data histograms\n"
      "set style fill solid 0.8 border -1\n"
      "set ylabel 'selected at internal nodes'\n"
      "set xtics rotate by -45\n"
      "plot ";
  for (std::size_t p = 0; p < n_passes; ++p) {
    if (p) plot += ", ";
    plot += "'feature_frequency.dat' using " + std::to_string(p + 2) + (p == 0 ? ":xtic(1)" : "") + " title 'pass " +
            std::to_string(p + 1) + "'";
  }
  if (n_passes == 0) plot += "0 notitle";
  detail::write_file((dir / "feature_frequency.gp").string(), plot + "\n");
}

}  // namespace ctxforest
