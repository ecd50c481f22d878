#include "pointsentinel/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "pointsentinel/eval.hpp"
#include "pointsentinel/report.hpp"
#include "pointsentinel/synth.hpp"

namespace fs = std::filesystem;

namespace ps::cli {

namespace {

nlohmann::json load_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  PS_IO_CHECK(in.good(), what, ": cannot open '", path, "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(format_msg(what, " '", path, "': ", e.what()));
  }
}

void require_version(const nlohmann::json& j, const char* what) {
  PS_CHECK(j.is_object() && j.contains("version"), what,
           ": missing required field \"version\"");
  PS_CHECK(j.at("version").is_number_integer() && j.at("version").get<int>() == 1, what,
           ": unsupported version ", j.at("version").dump());
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  PS_IO_CHECK(!ec && fs::is_directory(path), "cannot create directory '", path, "': ",
              ec.message());
}

void check_writable_dir(const std::string& path) {
  ensure_dir(path);
  const fs::path probe = fs::path(path) / ".ps_write_probe";
  std::ofstream f(probe.string(), std::ios::trunc);
  PS_IO_CHECK(f.good(), "directory '", path, "' is not writable");
  f.close();
  std::error_code ec;
  fs::remove(probe, ec);
}

void refuse_existing(const std::string& path, bool overwrite) {
  PS_CHECK(overwrite || !fs::exists(path), "output '", path,
           "' already exists (use --overwrite to replace it)");
}

std::string head_tag(nn::HeadVariant head, std::uint64_t seed) {
  return format_msg(nn::to_string(head), "_seed", seed);
}

}  // namespace

std::string checkpoint_path(const std::string& out_dir, nn::HeadVariant head,
                            std::uint64_t seed) {
  return (fs::path(out_dir) / "checkpoints" / (head_tag(head, seed) + ".ckpt")).string();
}

std::string train_log_path(const std::string& out_dir, nn::HeadVariant head, std::uint64_t seed) {
  return (fs::path(out_dir) / "logs" / (head_tag(head, seed) + ".csv")).string();
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  const nlohmann::json j = load_json(path, "experiment spec");
  require_version(j, "experiment spec");
  ExperimentSpec spec;
  spec.name = j.value("name", std::string("experiment"));
  PS_CHECK(j.contains("train_dataset") && j.contains("test_dataset"),
           "experiment spec: train_dataset and test_dataset are required");
  spec.train_dataset = j.at("train_dataset").get<std::string>();
  spec.test_dataset = j.at("test_dataset").get<std::string>();
  if (j.contains("presence_dataset") && !j.at("presence_dataset").is_null()) {
    spec.presence_dataset = j.at("presence_dataset").get<std::string>();
  }
  PS_CHECK(j.contains("heads") && j.at("heads").is_array() && !j.at("heads").empty(),
           "experiment spec: heads must be a non-empty list");
  for (const auto& hj : j.at("heads")) {
    spec.heads.push_back(nn::head_variant_from_string(hj.get<std::string>()));
  }
  PS_CHECK(j.contains("seeds") && j.at("seeds").is_array() && !j.at("seeds").empty(),
           "experiment spec: seeds must be a non-empty list");
  for (const auto& sj : j.at("seeds")) spec.seeds.push_back(sj.get<std::uint64_t>());

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    spec.delta_max_relative = e.value("delta_max_relative", spec.delta_max_relative);
    spec.delta_max_mm = e.value("delta_max_mm", spec.delta_max_mm);
    spec.n_bootstrap = e.value("n_bootstrap", spec.n_bootstrap);
    spec.alpha = e.value("alpha", spec.alpha);
    spec.n_thresholds = e.value("n_thresholds", spec.n_thresholds);
    spec.bootstrap_seed = e.value("bootstrap_seed", spec.bootstrap_seed);
    if (e.contains("delong_pairs")) {
      for (const auto& pj : e.at("delong_pairs")) {
        PS_CHECK(pj.is_array() && pj.size() == 2, "experiment spec: delong_pairs entries must be [head_a, head_b]");
        spec.delong_pairs.emplace_back(nn::head_variant_from_string(pj.at(0).get<std::string>()),
                                       nn::head_variant_from_string(pj.at(1).get<std::string>()));
      }
    }
  }
  PS_CHECK(spec.delta_max_relative > 0.0 && spec.delta_max_mm > 0.0,
           "experiment spec: delta_max values must be positive");

  if (j.contains("train")) spec.train = train::train_config_from_json(j.at("train"));
  if (j.contains("backbone")) spec.train.backbone = nn::backbone_from_json(j.at("backbone"));
  PS_CHECK(j.contains("output_dir"), "experiment spec: output_dir is required");
  spec.output_dir = j.at("output_dir").get<std::string>();
  return spec;
}

// --- generate -------------------------------------------------------------------

void cmd_generate(const std::string& config_path, const std::string& out_dir,
                  const GlobalOpts& opts) {
  const nlohmann::json j = load_json(config_path, "scene config");
  require_version(j, "scene config");
  PS_CHECK(j.contains("scene"), "scene config: missing \"scene\" object");
  synth::SceneConfig scene = synth::scene_config_from_json(j.at("scene"));
  if (opts.seed) scene.seed = *opts.seed;
  const std::string kind = j.value("kind", std::string("dataset"));

  std::vector<synth::SyntheticScene> scenes;
  if (kind == "dataset") {
    const int n = j.value("n", 0);
    const int group = j.value("patient_group_size", 1);
    PS_CHECK(n >= 1, "scene config: \"n\" must be >= 1 for kind \"dataset\"");
    scenes = synth::generate_dataset(scene, n, group);
  } else if (kind == "presence") {
    const int n_pos = j.value("n_pos", 0);
    const int n_neg = j.value("n_neg", 0);
    PS_CHECK(n_pos >= 1 && n_neg >= 1,
             "scene config: \"n_pos\" and \"n_neg\" must be >= 1 for kind \"presence\"");
    scenes = synth::make_presence_set(scene, n_pos, n_neg);
  } else {
    throw ValidationError(format_msg("scene config: unknown kind '", kind, "'"));
  }

  check_writable_dir(out_dir);
  const std::string records_csv = (fs::path(out_dir) / "records.csv").string();
  refuse_existing(records_csv, opts.overwrite);
  ensure_dir((fs::path(out_dir) / "images").string());

  std::vector<data::SampleRecord> records;
  records.reserve(scenes.size());
  for (synth::SyntheticScene& s : scenes) {
    const std::string rel = "images/" + s.record.case_id + ".pgm";
    data::save_image(s.image, (fs::path(out_dir) / rel).string());
    s.record.image_path = rel;
    records.push_back(s.record);
  }
  data::write_records(records, records_csv);
  if (!opts.quiet) {
    std::cout << "wrote " << records.size() << " scenes (" << kind << ") to " << out_dir
              << std::endl;
  }
}

// --- train -----------------------------------------------------------------------

namespace {

void write_train_log(const std::string& path, const train::Checkpoint& ck) {
  report::Table t;
  t.columns = {"epoch", "train_loss", "val_precision_auc"};
  for (const train::EpochStats& e : ck.history) {
    t.add_row({std::to_string(e.epoch), report::fmt_double(e.train_loss),
               report::fmt_double(e.val_precision_auc)});
  }
  t.write_csv(path);
}

}  // namespace

void cmd_train(const std::string& spec_path, const GlobalOpts& opts, bool resume) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  if (opts.output_dir) spec.output_dir = *opts.output_dir;
  std::vector<std::uint64_t> seeds = spec.seeds;
  if (opts.seed) seeds = {*opts.seed};

  const train::Dataset train_set = data::load_samples_csv(spec.train_dataset);
  const train::Dataset val_set = data::load_samples_csv(spec.test_dataset);

  check_writable_dir(spec.output_dir);
  ensure_dir((fs::path(spec.output_dir) / "checkpoints").string());
  ensure_dir((fs::path(spec.output_dir) / "logs").string());

  for (nn::HeadVariant head : spec.heads) {
    for (std::uint64_t seed : seeds) {
      const std::string ckpt = checkpoint_path(spec.output_dir, head, seed);
      const std::string log = train_log_path(spec.output_dir, head, seed);

      train::TrainConfig cfg = spec.train;
      cfg.head = head;
      cfg.seed = seed;

      train::TrainHooks hooks;
      hooks.after_epoch = [&](const train::Checkpoint& ck, const train::EpochStats& stats) {
        train::save_checkpoint(ck, ckpt);
        write_train_log(log, ck);
        if (!opts.quiet) {
          std::cout << head_tag(head, seed) << " epoch " << stats.epoch << " loss "
                    << report::fmt_double(stats.train_loss) << " val_auc "
                    << report::fmt_double(stats.val_precision_auc) << std::endl;
        }
      };

      try {
        if (resume && fs::exists(ckpt)) {
          train::Checkpoint ck = train::load_checkpoint(ckpt);
          PS_CHECK(ck.config.head == head && ck.config.seed == seed, "checkpoint '", ckpt,
                   "' does not match head/seed ", head_tag(head, seed));
          ck.config.epochs = cfg.epochs;
          train::continue_training(ck, train_set, val_set, hooks);
          train::save_checkpoint(ck, ckpt);
          write_train_log(log, ck);
        } else {
          refuse_existing(ckpt, opts.overwrite || resume);
          train::Checkpoint ck = train::train(cfg, train_set, val_set, hooks);
          train::save_checkpoint(ck, ckpt);
          write_train_log(log, ck);
        }
      } catch (const DivergenceError& e) {
        throw DivergenceError(
            format_msg(e.what(), " [head ", nn::to_string(head), ", seed ", seed, "]"),
            e.epoch());
      }
      if (!opts.quiet) std::cout << "trained " << head_tag(head, seed) << " -> " << ckpt << std::endl;
    }
  }
}

// --- evaluate --------------------------------------------------------------------

namespace {

struct RunEval {
  std::vector<double> errors_rel;
  std::vector<double> errors_mm;
  std::optional<eval::BootstrapCI> ci;
  std::optional<eval::ErrorStats> stats_mm;
  double prec_auc_rel = 0.0;
  std::optional<double> prec_auc_mm;
  std::optional<double> roc;
  std::vector<double> presence;  // per-case scores, presence set order
};

std::string opt_str(const std::optional<double>& v) {
  return v ? report::fmt_double(*v) : std::string();
}

}  // namespace

void cmd_evaluate(const std::string& spec_path, const GlobalOpts& opts) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  if (opts.output_dir) spec.output_dir = *opts.output_dir;

  const train::Dataset test_set = data::load_samples_csv(spec.test_dataset);
  PS_CHECK(!test_set.empty(), "evaluate: test dataset is empty");
  train::Dataset presence_set;
  std::vector<int> presence_labels;
  if (spec.presence_dataset) {
    presence_set = data::load_samples_csv(*spec.presence_dataset);
    for (const data::LoadedSample& s : presence_set) {
      presence_labels.push_back(s.record.point.has_value() ? 1 : 0);
    }
  }

  check_writable_dir(spec.output_dir);
  const std::string metrics_csv = (fs::path(spec.output_dir) / "metrics.csv").string();
  refuse_existing(metrics_csv, opts.overwrite);
  for (const char* d : {"curves", "plots", "predictions", "presence_scores"}) {
    ensure_dir((fs::path(spec.output_dir) / d).string());
  }

  const int threads = train::resolve_threads(spec.train.threads);
  std::map<std::string, RunEval> runs;  // head_tag -> eval

  for (nn::HeadVariant head : spec.heads) {
    for (std::uint64_t seed : spec.seeds) {
      const std::string tag = head_tag(head, seed);
      const std::string ckpt = checkpoint_path(spec.output_dir, head, seed);
      PS_IO_CHECK(fs::exists(ckpt), "evaluate: missing checkpoint '", ckpt, "'");
      const nn::DetectionModel model = train::load_checkpoint(ckpt).best_model();

      RunEval re;
      const std::vector<nn::PredictedPoint> preds =
          train::predict_all(model, test_set, threads);

      report::Table pred_table;
      pred_table.columns = {"case_id", "pred_x", "pred_y", "score",
                            "gt_x",    "gt_y",   "error_relative", "error_mm"};
      for (std::size_t i = 0; i < test_set.size(); ++i) {
        const eval::LocalizationError le =
            eval::localization_error(preds[i], test_set[i].record);
        re.errors_rel.push_back(le.relative);
        if (le.absolute_mm) re.errors_mm.push_back(*le.absolute_mm);
        pred_table.add_row({test_set[i].record.case_id, report::fmt_double(preds[i].x),
                            report::fmt_double(preds[i].y), report::fmt_double(preds[i].score),
                            report::fmt_double(test_set[i].record.point->x),
                            report::fmt_double(test_set[i].record.point->y),
                            report::fmt_double(le.relative), opt_str(le.absolute_mm)});
      }
      pred_table.write_csv(
          (fs::path(spec.output_dir) / "predictions" / (tag + ".csv")).string());

      const eval::PrecisionCurve curve =
          eval::precision_curve(re.errors_rel, spec.delta_max_relative, spec.n_thresholds);
      re.prec_auc_rel = curve.auc;
      report::Table curve_table;
      curve_table.columns = {"threshold", "fraction"};
      for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        curve_table.add_row(
            {report::fmt_double(curve.thresholds[i]), report::fmt_double(curve.fractions[i])});
      }
      curve_table.write_csv(
          (fs::path(spec.output_dir) / "curves" / (tag + "_relative.csv")).string());

      re.ci = eval::bootstrap_auc_ci(re.errors_rel, spec.delta_max_relative, spec.n_bootstrap,
                                     spec.alpha,
                                     derive_seed(spec.bootstrap_seed, std::hash<std::string>{}(tag)));

      if (!re.errors_mm.empty()) {
        re.stats_mm = eval::error_stats(re.errors_mm);
        const eval::PrecisionCurve mm_curve =
            eval::precision_curve(re.errors_mm, spec.delta_max_mm, spec.n_thresholds);
        re.prec_auc_mm = mm_curve.auc;
        report::Table mm_table;
        mm_table.columns = {"threshold", "fraction"};
        for (std::size_t i = 0; i < mm_curve.thresholds.size(); ++i) {
          mm_table.add_row({report::fmt_double(mm_curve.thresholds[i]),
                            report::fmt_double(mm_curve.fractions[i])});
        }
        mm_table.write_csv((fs::path(spec.output_dir) / "curves" / (tag + "_mm.csv")).string());
      }

      if (!presence_set.empty() && head != nn::HeadVariant::regression) {
        re.presence = train::presence_scores(model, presence_set, threads);
        report::Table score_table;
        score_table.columns = {"case_id", "label", "score"};
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < presence_set.size(); ++i) {
          (presence_labels[i] ? pos : neg).push_back(re.presence[i]);
          score_table.add_row({presence_set[i].record.case_id,
                               std::to_string(presence_labels[i]),
                               report::fmt_double(re.presence[i])});
        }
        score_table.write_csv(
            (fs::path(spec.output_dir) / "presence_scores" / (tag + ".csv")).string());
        re.roc = eval::roc_auc(pos, neg).auc;
      }

      runs[tag] = std::move(re);
      if (!opts.quiet) {
        std::cout << tag << " prec_auc_rel "
                  << report::fmt_double(runs[tag].prec_auc_rel) << std::endl;
      }
    }
  }

  // metrics.csv: one row per head x seed plus a seed-mean row per head.
  report::Table metrics;
  metrics.columns = {"head",   "seed",     "n_test",  "prec_auc_rel", "ci_lo",  "ci_hi",
                     "prec_auc_mm", "mean_mm", "median_mm", "max_mm", "min_mm", "std_mm",
                     "q1_mm", "q3_mm", "roc_auc"};
  auto stats_row = [&](nn::HeadVariant head, const std::string& seed_label, const RunEval& re) {
    std::vector<std::string> row{
        nn::to_string(head), seed_label, std::to_string(test_set.size()),
        report::fmt_double(re.prec_auc_rel), report::fmt_double(re.ci ? re.ci->lo : 0.0),
        report::fmt_double(re.ci ? re.ci->hi : 0.0), opt_str(re.prec_auc_mm)};
    if (re.stats_mm) {
      const eval::ErrorStats& s = *re.stats_mm;
      for (double v : {s.mean, s.median, s.max, s.min, s.std, s.q1, s.q3}) {
        row.push_back(report::fmt_double(v));
      }
    } else {
      for (int i = 0; i < 7; ++i) row.emplace_back();
    }
    row.push_back(opt_str(re.roc));
    metrics.add_row(std::move(row));
  };

  for (nn::HeadVariant head : spec.heads) {
    for (std::uint64_t seed : spec.seeds) {
      stats_row(head, std::to_string(seed), runs.at(head_tag(head, seed)));
    }
    // Seed mean: averages where every seed produced a value.
    RunEval mean;
    const std::size_t n_seeds = spec.seeds.size();
    double auc = 0.0, lo = 0.0, hi = 0.0;
    bool all_mm = true, all_roc = true;
    eval::ErrorStats ms{};
    double mm_auc = 0.0, roc = 0.0;
    for (std::uint64_t seed : spec.seeds) {
      const RunEval& re = runs.at(head_tag(head, seed));
      auc += re.prec_auc_rel;
      lo += re.ci->lo;
      hi += re.ci->hi;
      if (re.stats_mm && re.prec_auc_mm) {
        ms.mean += re.stats_mm->mean;
        ms.median += re.stats_mm->median;
        ms.max += re.stats_mm->max;
        ms.min += re.stats_mm->min;
        ms.std += re.stats_mm->std;
        ms.q1 += re.stats_mm->q1;
        ms.q3 += re.stats_mm->q3;
        mm_auc += *re.prec_auc_mm;
      } else {
        all_mm = false;
      }
      if (re.roc) roc += *re.roc;
      else all_roc = false;
    }
    const double inv = 1.0 / static_cast<double>(n_seeds);
    mean.prec_auc_rel = auc * inv;
    mean.ci = eval::BootstrapCI{mean.prec_auc_rel, lo * inv, hi * inv, 0, 0};
    if (all_mm) {
      ms.mean *= inv; ms.median *= inv; ms.max *= inv; ms.min *= inv;
      ms.std *= inv; ms.q1 *= inv; ms.q3 *= inv;
      mean.stats_mm = ms;
      mean.prec_auc_mm = mm_auc * inv;
    }
    if (all_roc) mean.roc = roc * inv;
    stats_row(head, "mean", mean);
  }
  metrics.write_csv(metrics_csv);

  // DeLong comparisons on the presence set, per seed.
  if (!spec.delong_pairs.empty() && !presence_set.empty()) {
    report::Table dl;
    dl.columns = {"head_a", "head_b", "seed", "auc_a", "auc_b", "z", "p"};
    for (const auto& [ha, hb] : spec.delong_pairs) {
      PS_CHECK(ha != nn::HeadVariant::regression && hb != nn::HeadVariant::regression,
               "delong_pairs: the regression head produces no presence score");
      for (std::uint64_t seed : spec.seeds) {
        const RunEval& ra = runs.at(head_tag(ha, seed));
        const RunEval& rb = runs.at(head_tag(hb, seed));
        const eval::DelongResult r = eval::delong_test(ra.presence, rb.presence, presence_labels);
        dl.add_row({nn::to_string(ha), nn::to_string(hb), std::to_string(seed),
                    report::fmt_double(r.auc_a), report::fmt_double(r.auc_b),
                    report::fmt_double(r.z), report::fmt_double(r.p_two_sided)});
      }
    }
    dl.write_csv((fs::path(spec.output_dir) / "delong.csv").string());
  }

  // One SVG overlaying the seed-mean precision curve of every head.
  std::vector<report::PlotSeries> series;
  for (nn::HeadVariant head : spec.heads) {
    report::PlotSeries s;
    s.label = nn::to_string(head);
    std::vector<double> mean_frac;
    for (std::uint64_t seed : spec.seeds) {
      const eval::PrecisionCurve c = eval::precision_curve(
          runs.at(head_tag(head, seed)).errors_rel, spec.delta_max_relative, spec.n_thresholds);
      if (mean_frac.empty()) mean_frac.assign(c.fractions.size(), 0.0);
      for (std::size_t i = 0; i < c.fractions.size(); ++i) mean_frac[i] += c.fractions[i];
      if (s.points.empty()) {
        for (double t : c.thresholds) s.points.emplace_back(t, 0.0);
      }
    }
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      s.points[i].second = mean_frac[i] / static_cast<double>(spec.seeds.size());
    }
    series.push_back(std::move(s));
  }
  report::write_curve_svg((fs::path(spec.output_dir) / "plots" / "precision_relative.svg").string(),
                          spec.name + ": precision vs relative threshold", "relative distance threshold",
                          "fraction within threshold", spec.delta_max_relative, series);
  if (!opts.quiet) std::cout << "metrics written to " << metrics_csv << std::endl;
}

// --- compare ---------------------------------------------------------------------

void cmd_compare(const std::string& run_a_dir, const std::string& run_b_dir,
                 const GlobalOpts& opts) {
  const std::string a_csv = (fs::path(run_a_dir) / "metrics.csv").string();
  const std::string b_csv = (fs::path(run_b_dir) / "metrics.csv").string();
  const report::Table a = report::Table::read_csv(a_csv);
  const report::Table b = report::Table::read_csv(b_csv);

  for (const std::string& c : a.columns) {
    PS_CHECK(b.col(c) >= 0, "compare: run B metrics missing column '", c, "'");
  }
  for (const std::string& c : b.columns) {
    PS_CHECK(a.col(c) >= 0, "compare: run A metrics missing column '", c, "'");
  }
  const int a_head = a.require_col("head"), a_seed = a.require_col("seed");

  auto key_of = [](const std::vector<std::string>& row, int hc, int sc) {
    return row[static_cast<std::size_t>(hc)] + "/" + row[static_cast<std::size_t>(sc)];
  };
  std::map<std::string, const std::vector<std::string>*> b_rows;
  const int b_head = b.require_col("head"), b_seed = b.require_col("seed");
  for (const auto& row : b.rows) b_rows[key_of(row, b_head, b_seed)] = &row;

  report::Table out;
  out.columns = {"head", "seed", "metric", "run_a", "run_b", "delta"};
  for (const auto& row : a.rows) {
    const auto it = b_rows.find(key_of(row, a_head, a_seed));
    if (it == b_rows.end()) continue;
    const auto& brow = *it->second;
    for (std::size_t c = 0; c < a.columns.size(); ++c) {
      const std::string& name = a.columns[c];
      if (name == "head" || name == "seed") continue;
      const std::string& av = row[c];
      const std::string& bv = brow[static_cast<std::size_t>(b.col(name))];
      if (av.empty() || bv.empty()) continue;
      const double da = std::stod(av);
      const double db = std::stod(bv);
      out.add_row({row[static_cast<std::size_t>(a_head)], row[static_cast<std::size_t>(a_seed)],
                   name, report::fmt_double(da), report::fmt_double(db),
                   report::fmt_double(db - da)});
    }
  }

  // DeLong between the two runs wherever both have presence scores for the
  // same head/seed over identical cases.
  report::Table dl;
  dl.columns = {"head", "seed", "auc_a", "auc_b", "z", "p"};
  const fs::path a_scores = fs::path(run_a_dir) / "presence_scores";
  const fs::path b_scores = fs::path(run_b_dir) / "presence_scores";
  if (fs::is_directory(a_scores) && fs::is_directory(b_scores)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a_scores)) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& fa : files) {
      const fs::path fb = b_scores / fa.filename();
      if (!fs::exists(fb)) continue;
      const report::Table ta = report::Table::read_csv(fa.string());
      const report::Table tb = report::Table::read_csv(fb.string());
      if (ta.rows.size() != tb.rows.size()) continue;
      const int ca = ta.require_col("case_id"), la = ta.require_col("label"),
                sa = ta.require_col("score");
      const int cb = tb.require_col("case_id"), sb = tb.require_col("score");
      std::vector<double> va, vb;
      std::vector<int> labels;
      bool aligned = true;
      for (std::size_t i = 0; i < ta.rows.size(); ++i) {
        if (ta.rows[i][static_cast<std::size_t>(ca)] != tb.rows[i][static_cast<std::size_t>(cb)]) {
          aligned = false;
          break;
        }
        va.push_back(std::stod(ta.rows[i][static_cast<std::size_t>(sa)]));
        vb.push_back(std::stod(tb.rows[i][static_cast<std::size_t>(sb)]));
        labels.push_back(std::stoi(ta.rows[i][static_cast<std::size_t>(la)]));
      }
      if (!aligned) continue;
      const eval::DelongResult r = eval::delong_test(va, vb, labels);
      const std::string stem = fa.stem().string();  // <head>_seed<k>
      const std::size_t pos = stem.rfind("_seed");
      dl.add_row({stem.substr(0, pos), stem.substr(pos + 5), report::fmt_double(r.auc_a),
                  report::fmt_double(r.auc_b), report::fmt_double(r.z),
                  report::fmt_double(r.p_two_sided)});
    }
  }

  if (!opts.quiet) {
    std::cout << "metric deltas (run B - run A):\n";
    for (const auto& row : out.rows) {
      std::cout << "  " << row[0] << " seed " << row[1] << " " << row[2] << ": " << row[3]
                << " -> " << row[4] << " (delta " << row[5] << ")\n";
    }
    for (const auto& row : dl.rows) {
      std::cout << "  delong " << row[0] << " seed " << row[1] << ": auc " << row[2] << " vs "
                << row[3] << ", p = " << row[5] << "\n";
    }
    std::cout << std::flush;
  }
  if (opts.output_dir) {
    check_writable_dir(*opts.output_dir);
    out.write_csv((fs::path(*opts.output_dir) / "comparison.csv").string());
    if (!dl.rows.empty()) {
      dl.write_csv((fs::path(*opts.output_dir) / "comparison_delong.csv").string());
    }
  }
}

int run_command(const GlobalOpts&, const std::function<void()>& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitValidation;
  }
}

}  // namespace ps::cli
