// fcr: train, score, edit and evaluate classifiers from JSON manifests.

#include <iostream>

#include "CLI11.hpp"
#include "fcr/cli/experiment.hpp"

namespace fs = std::filesystem;
using namespace fcr;

namespace {

struct Common {
  std::string manifest;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-m,--manifest", c.manifest, "experiment manifest (json)");
  app->add_option("--data", c.data, "MNIST directory (overrides manifest and FCR_DATA_DIR)");
  app->add_option("--out", c.out, "output path");
  app->add_option("--seed", c.seed, "override manifest seed");
  app->add_option("--threads", c.threads, "worker threads for feature extraction (1 = bit-reproducible)");
}

cli::ExperimentManifest resolve(const Common& c) {
  cli::ExperimentManifest m = c.manifest.empty() ? cli::ExperimentManifest{} : cli::load_manifest(c.manifest);
  if (!c.data.empty()) m.dataset.root = c.data;
  if (c.seed) {
    m.seed = *c.seed;
    m.train.seed = *c.seed;
    m.edit.clone.finetune.seed = *c.seed;
  }
  if (c.threads) m.threads = *c.threads;
  if (m.threads == 0) throw Error(ErrorKind::Usage, "--threads must be at least 1");
  return m;
}

fs::path out_path(const Common& c, const cli::ExperimentManifest& m, const std::string& fallback) {
  return c.out.empty() ? fs::path(m.output) / fallback : fs::path(c.out);
}

nn::Model load_for(const std::string& dir, const data::GroupedDataset& ds) {
  if (dir.empty()) throw Error(ErrorKind::Usage, "--checkpoint is required");
  nn::Model model = nn::load(dir);
  if (!(model.input_shape() == ds.shape) || model.num_classes() != ds.num_classes) {
    throw Error(ErrorKind::UnsupportedArch, "checkpoint " + dir + " does not match the dataset (" +
                                                std::to_string(model.num_classes()) + " vs " +
                                                std::to_string(ds.num_classes) + " classes)");
  }
  return model;
}

const data::GroupedDataset& pick_split(const data::DatasetSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw Error(ErrorKind::Usage, "unknown split '" + name + "'");
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c, std::optional<std::size_t> epochs, std::optional<double> lr) {
  auto m = resolve(c);
  if (epochs) m.train.epochs = *epochs;
  if (lr) m.train.lr = *lr;
  const auto splits = cli::build_splits(m);
  const fs::path dir = out_path(c, m, "model");
  auto [model, history] = cli::train_model(m, splits.train);
  const auto ckpt = nn::save(model, dir / "checkpoint");
  eval::write_file(dir / "history.csv", cli::history_csv(history));
  const auto report = eval::evaluate(model, splits.test, m.threads);
  eval::write_file(dir / "test_report.csv", eval::report_csv(report));
  nlohmann::ordered_json run;
  run["manifest"] = cli::manifest_to_json(m);
  run["manifest_sha256"] = sha256_hex(cli::manifest_to_json(m).dump());
  run["datasets"] = {data::dataset_manifest(splits.train, {{"builder", m.dataset.builder}}),
                     data::dataset_manifest(splits.val, {{"builder", m.dataset.builder}}),
                     data::dataset_manifest(splits.test, {{"builder", m.dataset.builder}})};
  run["params_sha256"] = ckpt.params_sha256;
  run["checkpoint_manifest_sha256"] = ckpt.manifest_sha256;
  eval::write_file(dir / "run.json", run.dump(2) + "\n");
  std::cout << "checkpoint " << (dir / "checkpoint").string() << "\nparams sha256 " << ckpt.params_sha256
            << "\ntest accuracy " << fmt_real(report.average) << "\n";
  return 0;
}

int cmd_score(const Common& c, const std::string& checkpoint, std::optional<std::string> candidates,
              std::optional<std::string> metric) {
  auto m = resolve(c);
  if (candidates) m.attribution.candidates = attribution::candidate_set_from_string(*candidates);
  if (metric) m.attribution.metric = attribution::metric_from_string(*metric);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  const auto acc = attribution::accumulate(model, splits.train.view(), {m.attribution.mode}, m.threads);
  const auto table = attribution::baseline_scores(model, acc, m.attribution.metric);
  eval::write_file(out_path(c, m, "scores.csv"),
                   attribution::score_csv(acc, table, model.head_weight(), m.attribution.candidates));
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    const auto top = attribution::rank_edges(table, model.head_weight(), k, m.attribution.candidates).front();
    std::cout << "class " << k << ": top edge (" << top.j << ", " << top.i << ") " << attribution::to_string(m.attribution.metric)
              << " " << fmt_real(table.score_of(top, k)) << "\n";
  }
  return 0;
}

struct EditFlags {
  std::optional<std::size_t> cls;
  std::optional<std::string> fictitious;
  std::optional<std::size_t> target_class;
  std::optional<double> rate;
  bool search = false;
  std::optional<std::string> label_mode;
  std::optional<std::string> metric;
};

void add_edit_flags(CLI::App* app, EditFlags& e) {
  auto* cls = app->add_option("--class", e.cls, "class to remove");
  auto* fic = app->add_option("--fictitious", e.fictitious, "feature value, subclass or worst-group to remove as a fictitious class");
  cls->excludes(fic);
  app->add_option("--target-class", e.target_class, "real class whose weight is edited (fictitious removal)");
  app->add_option("--label-mode", e.label_mode, "head-clone labelling: augmented | feature-only | subclass");
  app->add_option("--metric", e.metric, "edge ranking metric");
}

void apply_edit_flags(cli::ExperimentManifest& m, const EditFlags& e) {
  if (e.cls) {
    m.edit.cls = e.cls;
    m.edit.fictitious.reset();
  }
  if (e.fictitious) {
    m.edit.fictitious = cli::fictitious_from_string(*e.fictitious);
    m.edit.clone.feature = *m.edit.fictitious;
    m.edit.cls.reset();
  }
  if (e.target_class) m.edit.target_class = e.target_class;
  if (e.rate) m.edit.rate = *e.rate;
  if (e.search) m.edit.search = true;
  if (e.label_mode) m.edit.clone.mode = editor::label_mode_from_string(*e.label_mode);
  if (e.metric) m.attribution.metric = attribution::metric_from_string(*e.metric);
  if (m.edit.cls.has_value() == m.edit.fictitious.has_value()) {
    throw Error(ErrorKind::Usage, "exactly one of --class and --fictitious is required");
  }
}

/// Chooses the edge to edit per the manifest; rate 0 leaves the model as is.
struct Planned {
  editor::EditTarget target;
  nn::EditRecord record;
  std::vector<std::string> log;
};

Planned plan_edit(const cli::ExperimentManifest& m, const nn::Model& model, const data::DatasetSplits& splits) {
  Planned p;
  if (m.edit.cls) {
    const auto acc = attribution::accumulate(model, splits.train.view(), {m.attribution.mode}, m.threads);
    const auto table = attribution::baseline_scores(model, acc, m.attribution.metric);
    auto res = editor::remove_class(model, *m.edit.cls, table, 0.0, m.attribution.candidates);
    p.target = {res.record.layer, res.record.j, res.record.i};
    p.record = res.record;
    p.log = res.log;
  } else {
    const auto attr = editor::attribute_fictitious(model, data::head(splits.train, m.edit.finetune_limit), m.edit.clone,
                                               {m.attribution.mode}, m.threads);
    auto res = editor::edit_from_attribution(model, attr, m.edit.target_class, 0.0, m.attribution.metric,
                                             m.attribution.candidates);
    p.target = res.target;
    p.record = res.record;
    p.log = res.log;
    if (attr.low_recall) p.log.push_back("warning: clone recall " + fmt_real(attr.clone_recall));
  }
  p.record.dataset_hash = data::dataset_hash(splits.train);
  return p;
}

std::string search_csv(const editor::SearchResult& s) {
  std::string out = "r,avg_acc,worst_acc,worst_group_id\n";
  for (const auto& p : s.visited)
    out += fmt_real(p.r) + "," + fmt_real(p.average) + "," + fmt_real(p.worst) + "," + std::to_string(p.worst_group) + "\n";
  return out;
}

int cmd_remove(const Common& c, const std::string& checkpoint, const EditFlags& flags) {
  auto m = resolve(c);
  apply_edit_flags(m, flags);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  cli::resolve_fictitious(m, model, splits);
  const fs::path dir = out_path(c, m, "remove");
  fs::create_directories(dir);
  Planned plan = plan_edit(m, model, splits);
  for (const auto& line : plan.log) std::cerr << line << "\n";

  double rate = m.edit.rate;
  if (m.edit.search) {
    const eval::HeadEvaluator val(model, splits.val, m.threads);
    const auto result = editor::search_rate(model, plan.target, val, m.edit.search_options);
    rate = result.r_star;
    eval::write_file(dir / "search.csv", search_csv(result));
    const auto grid = editor::rate_grid(m.grid_step);
    const eval::HeadEvaluator test(model, splits.test, m.threads);
    eval::write_file(dir / "sweep.csv", eval::curve_csv(eval::sweep(model, plan.target, grid, test)));
    std::cout << "r* " << fmt_real(rate) << "\n";
  }
  nn::Model edited = model;
  auto record = editor::apply_pfn(edited, plan.target, rate, m.edit.cls ? nn::EditSource::ClassRemoval
                                                                         : nn::EditSource::FictitiousRemoval);
  record.sca = plan.record.sca;
  record.ca = plan.record.ca;
  record.dataset_hash = plan.record.dataset_hash;
  const auto ckpt = nn::save(edited, dir / "checkpoint");
  fs::remove(dir / "edits.jsonl");
  editor::append_audit((dir / "edits.jsonl").string(), record);
  const auto before = eval::evaluate(model, splits.test, m.threads);
  const auto after = eval::evaluate(edited, splits.test, m.threads);
  eval::write_file(dir / "baseline_report.csv", eval::report_csv(before));
  eval::write_file(dir / "report.csv", eval::report_csv(after));
  std::cout << "edited (" << record.j << ", " << record.i << ") rate " << fmt_real(rate) << "\nparams sha256 "
            << ckpt.params_sha256 << "\ntest accuracy " << fmt_real(before.average) << " -> " << fmt_real(after.average)
            << "\nworst " << fmt_real(before.worst) << " -> " << fmt_real(after.worst) << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& checkpoint, const EditFlags& flags, std::optional<double> step,
              const std::string& svg, const std::string& split) {
  auto m = resolve(c);
  apply_edit_flags(m, flags);
  if (step) m.grid_step = *step;
  const auto grid = editor::rate_grid(m.grid_step);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  cli::resolve_fictitious(m, model, splits);
  const auto plan = plan_edit(m, model, splits);
  const eval::HeadEvaluator ev(model, pick_split(splits, split), m.threads);
  const auto curve = eval::sweep(model, plan.target, grid, ev);
  eval::write_file(out_path(c, m, "sweep.csv"), eval::curve_csv(curve));
  if (!svg.empty()) eval::write_file(svg, eval::curve_svg(curve, m.name));
  std::cout << "edge (" << plan.target.j << ", " << plan.target.i << "), " << curve.rows.size() << " rows\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& split, const std::string& format) {
  const auto m = resolve(c);
  const auto fmt = eval::report_format_from_string(format);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  const auto report = eval::evaluate(model, pick_split(splits, split), m.threads);
  eval::emit_report(report, out_path(c, m, "report." + format), fmt);
  std::cout << "average " << fmt_real(report.average) << "\nworst " << fmt_real(report.worst) << " (cell "
            << report.worst_group << ")\n";
  return 0;
}

int cmd_oracle(const Common& c, const std::string& checkpoint, std::size_t cls, const std::string& split) {
  const auto m = resolve(c);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  const eval::HeadEvaluator ev(model, pick_split(splits, split), m.threads);
  const auto ranking = attribution::brute_force_oracle(model, cls, ev, m.attribution.candidates);
  eval::write_file(out_path(c, m, "oracle.csv"), attribution::oracle_csv(ranking, cls));
  const auto acc = attribution::accumulate(model, splits.train.view(), {m.attribution.mode}, m.threads);
  const auto top = attribution::rank_edges(attribution::sca_table(acc), model.head_weight(), cls, m.attribution.candidates)
                       .front();
  std::cout << "oracle top (" << ranking.front().edge.j << ", " << ranking.front().edge.i << ") drop "
            << fmt_real(ranking.front().on_drop) << "\nsca top (" << top.j << ", " << top.i << ") oracle rank "
            << attribution::oracle_rank(ranking, top) << " of " << ranking.size() << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& checkpoint, const EditFlags& flags, std::size_t random_seeds) {
  auto m = resolve(c);
  apply_edit_flags(m, flags);
  const auto splits = cli::build_splits(m);
  const auto model = load_for(checkpoint, splits.train);
  cli::resolve_fictitious(m, model, splits);
  const auto& test = splits.test;
  const eval::HeadEvaluator ev(model, test, m.threads);
  const auto base = ev.evaluate(model);

  // Cells: subclasses for fictitious removal on subclassed data, else classes.
  const bool by_subclass = m.edit.fictitious && test.has_subclass() && m.edit.clone.mode == editor::LabelMode::Subclass;
  const std::size_t removed_cell = by_subclass ? static_cast<std::size_t>(*m.edit.fictitious)
                                   : m.edit.cls ? *m.edit.cls
                                                : 0;
  auto cells = [&](const eval::EvalReport& r) { return by_subclass ? r.per_subclass : r.per_class; };
  auto score = [&](const eval::EvalReport& r) {
    const auto v = cells(r);
    double retained = 0;
    for (std::size_t k = 0; k < v.size(); ++k)
      if (k != removed_cell) retained += v[k].accuracy();
    return std::pair{v[removed_cell].accuracy(), retained / static_cast<double>(v.size() - 1)};
  };

  std::string csv = "method,seed,j,i,removed_acc,retained_acc\n";
  auto row = [&](const std::string& name, const std::string& seed, std::size_t j, std::size_t i) {
    nn::Model edited = model;
    editor::apply_pfn(edited, {model.final_layer(), j, i}, m.edit.rate, nn::EditSource::Manual);
    const auto [removed, retained] = score(ev.evaluate(edited));
    csv += name + "," + seed + "," + std::to_string(j) + "," + std::to_string(i) + "," + fmt_real(removed) + "," +
           fmt_real(retained) + "\n";
  };
  const auto [base_removed, base_retained] = score(base);
  csv += "none,," + std::string(",,") + fmt_real(base_removed) + "," + fmt_real(base_retained) + "\n";

  std::optional<editor::FictitiousAttribution> attr;
  std::optional<attribution::ClassAccumulators> acc;
  if (m.edit.fictitious) {
    attr = editor::attribute_fictitious(model, data::head(splits.train, m.edit.finetune_limit), m.edit.clone,
                                               {m.attribution.mode}, m.threads);
  } else {
    acc = attribution::accumulate(model, splits.train.view(), {m.attribution.mode}, m.threads);
  }
  std::size_t row_j = 0;
  for (auto metric : {attribution::Metric::Sca, attribution::Metric::GradTimesAct, attribution::Metric::L1,
                      attribution::Metric::ActOnly, attribution::Metric::GradOnly, attribution::Metric::FisherDiag}) {
    editor::EditTarget t;
    if (attr) {
      t = editor::edit_from_attribution(model, *attr, m.edit.target_class, 0.0, metric, m.attribution.candidates).target;
    } else {
      const auto table = attribution::baseline_scores(model, *acc, metric);
      const auto rec = editor::remove_class(model, *m.edit.cls, table, 0.0, m.attribution.candidates).record;
      t = {rec.layer, rec.j, rec.i};
    }
    row_j = t.j;
    row(attribution::to_string(metric), "", t.j, t.i);
  }
  for (std::size_t s = 0; s < random_seeds; ++s) {
    Pcg32 rng(m.seed + s, 0x72616e64ULL);
    std::size_t i = 0;
    do {
      i = rng.below(static_cast<std::uint32_t>(model.feature_dim()));
    } while (std::fabs(model.head_weight().at(row_j, i)) < attribution::kPivotThreshold);
    row("random", std::to_string(s), row_j, i);
  }
  eval::write_file(out_path(c, m, "ablation.csv"), csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-weight class removal and feature neutralization"};
  app.require_subcommand(1);

  Common common;
  EditFlags edit;
  std::string checkpoint, split = "test", format = "csv", svg;
  std::optional<std::size_t> epochs, cls_oracle;
  std::optional<double> lr, step;
  std::optional<std::string> candidates, metric;
  std::size_t random_seeds = 20;

  auto* train = app.add_subcommand("train", "train a model from a manifest");
  add_common(train, common);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);

  auto* score = app.add_subcommand("score", "write per-edge attribution scores");
  add_common(score, common);
  score->add_option("--checkpoint", checkpoint)->required();
  score->add_option("--candidate-set", candidates, "class-row | full-layer");
  score->add_option("--metric", metric, "sca | l1 | act-only | grad-only | grad-times-act | fisher-diag");

  auto* remove = app.add_subcommand("remove", "edit one weight to remove a class or feature");
  add_common(remove, common);
  remove->add_option("--checkpoint", checkpoint)->required();
  add_edit_flags(remove, edit);
  auto* rate = remove->add_option("--rate", edit.rate, "neutralization rate in [0, 1]");
  auto* search = remove->add_flag("--search", edit.search, "choose the rate on the validation split");
  rate->excludes(search);

  auto* sweep = app.add_subcommand("sweep", "accuracy against neutralization rate");
  add_common(sweep, common);
  sweep->add_option("--checkpoint", checkpoint)->required();
  add_edit_flags(sweep, edit);
  sweep->add_option("--grid", step, "grid step in (0, 1]");
  sweep->add_option("--svg", svg, "also write an SVG chart here");
  sweep->add_option("--split", split);

  auto* ev = app.add_subcommand("eval", "per-class / per-group accuracy report");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--split", split);
  ev->add_option("--format", format, "csv | json");

  auto* oracle = app.add_subcommand("oracle", "brute-force single-edge ranking for one class");
  add_common(oracle, common);
  oracle->add_option("--checkpoint", checkpoint)->required();
  oracle->add_option("--class", cls_oracle)->required();
  std::string oracle_split = "val";
  oracle->add_option("--split", oracle_split);

  auto* ablate = app.add_subcommand("ablate", "compare edge-selection metrics on one removal");
  add_common(ablate, common);
  ablate->add_option("--checkpoint", checkpoint)->required();
  add_edit_flags(ablate, edit);
  ablate->add_option("--rate", edit.rate);
  ablate->add_option("--random-seeds", random_seeds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(common, epochs, lr);
    if (*score) return cmd_score(common, checkpoint, candidates, metric);
    if (*remove) return cmd_remove(common, checkpoint, edit);
    if (*sweep) return cmd_sweep(common, checkpoint, edit, step, svg, split);
    if (*ev) return cmd_eval(common, checkpoint, split, format);
    if (*oracle) return cmd_oracle(common, checkpoint, *cls_oracle, oracle_split);
    if (*ablate) return cmd_ablate(common, checkpoint, edit, random_seeds);
  } catch (const Error& e) {
    std::cerr << "fcr: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "fcr: " << e.what() << "\n";
    return 4;
  }
  return 1;
}
