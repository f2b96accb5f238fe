#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "fcr/fcr.hpp"

namespace fcr::cli {

struct DatasetConfig {
  std::string builder = "mnist";  // mnist | parity | corner-patch
  std::string root;               // empty: FCR_DATA_DIR, then data/mnist
  std::size_t val_count = 5000;
  data::PatchSpec patch;
  int designated = 0;
  std::size_t train_limit = 0;  // 0 keeps every sample
};

struct ModelConfig {
  std::string arch = "conv2net";
  std::size_t penultimate = 64;
  std::vector<std::size_t> hidden;  // mlp only
};

struct AttributionConfig {
  attribution::CandidateSet candidates = attribution::CandidateSet::ClassRow;
  attribution::ActivationMode mode = attribution::ActivationMode::Source;
  attribution::Metric metric = attribution::Metric::Sca;
};

/// Fictitious value meaning "the attribute value of the validation worst group".
inline constexpr int kWorstGroupFeature = -1;

struct EditConfig {
  std::optional<std::size_t> cls;
  std::optional<int> fictitious;  // kWorstGroupFeature until resolved
  std::optional<std::size_t> target_class;
  editor::HeadCloneSpec clone;
  std::size_t finetune_limit = 0;  // head-clone data: first N training samples (0 = all)
  double rate = 1.0;
  bool search = false;
  editor::SearchOptions search_options;
};

struct ExperimentManifest {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  DatasetConfig dataset;
  ModelConfig model;
  nn::TrainConfig train;
  AttributionConfig attribution;
  EditConfig edit;
  double grid_step = 0.05;
  std::string output = "out";
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

inline nn::TrainConfig train_from_json(const nlohmann::json& j, nn::TrainConfig c) {
  read(j, "epochs", c.epochs);
  read(j, "lr", c.lr);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  if (j.contains("optimizer")) c.optimizer = nn::optimizer_from_string(j.at("optimizer").get<std::string>());
  return c;
}

inline nlohmann::ordered_json train_to_json(const nn::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"optimizer", nn::to_string(c.optimizer)}};
}

}  // namespace detail

inline int fictitious_from_string(const std::string& s) {
  if (s == "worst-group") return kWorstGroupFeature;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Usage, "fictitious feature must be a nonnegative integer or 'worst-group', got '" + s + "'");
}

inline int fictitious_from_json(const nlohmann::json& j) {
  if (j.is_string()) return fictitious_from_string(j.get<std::string>());
  const int v = j.get<int>();
  if (v < 0) throw Error(ErrorKind::Usage, "fictitious feature must be nonnegative");
  return v;
}

inline ExperimentManifest manifest_from_json(const nlohmann::json& j) {
  using detail::read;
  ExperimentManifest m;
  try {
    read(j, "name", m.name);
    read(j, "seed", m.seed);
    read(j, "threads", m.threads);
    read(j, "grid_step", m.grid_step);
    read(j, "output", m.output);
    m.train.seed = m.seed;
    m.edit.clone.finetune.seed = m.seed;
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      read(d, "builder", m.dataset.builder);
      read(d, "root", m.dataset.root);
      read(d, "val_count", m.dataset.val_count);
      read(d, "designated", m.dataset.designated);
      read(d, "train_limit", m.dataset.train_limit);
      if (d.contains("patch")) {
        const auto& p = d.at("patch");
        read(p, "size", m.dataset.patch.size);
        read(p, "intensity", m.dataset.patch.intensity);
        read(p, "rho", m.dataset.patch.rho);
        if (p.contains("corner")) m.dataset.patch.corner = data::corner_from_string(p.at("corner").get<std::string>());
      }
    }
    if (j.contains("model")) {
      const auto& d = j.at("model");
      read(d, "arch", m.model.arch);
      read(d, "penultimate", m.model.penultimate);
      read(d, "hidden", m.model.hidden);
    }
    if (j.contains("train")) m.train = detail::train_from_json(j.at("train"), m.train);
    if (j.contains("attribution")) {
      const auto& d = j.at("attribution");
      if (d.contains("candidate_set"))
        m.attribution.candidates = attribution::candidate_set_from_string(d.at("candidate_set").get<std::string>());
      if (d.contains("activation"))
        m.attribution.mode = attribution::activation_mode_from_string(d.at("activation").get<std::string>());
      if (d.contains("metric")) m.attribution.metric = attribution::metric_from_string(d.at("metric").get<std::string>());
    }
    if (j.contains("edit")) {
      const auto& d = j.at("edit");
      if (d.contains("class")) m.edit.cls = d.at("class").get<std::size_t>();
      if (d.contains("fictitious")) m.edit.fictitious = fictitious_from_json(d.at("fictitious"));
      if (d.contains("target_class")) m.edit.target_class = d.at("target_class").get<std::size_t>();
      read(d, "rate", m.edit.rate);
      read(d, "search", m.edit.search);
      if (d.contains("label_mode")) m.edit.clone.mode = editor::label_mode_from_string(d.at("label_mode").get<std::string>());
      if (d.contains("feature_source"))
        m.edit.clone.source = editor::feature_source_from_string(d.at("feature_source").get<std::string>());
      read(d, "min_recall", m.edit.clone.min_recall);
      read(d, "finetune_limit", m.edit.finetune_limit);
      if (d.contains("finetune")) m.edit.clone.finetune = detail::train_from_json(d.at("finetune"), m.edit.clone.finetune);
      read(d, "lambda", m.edit.search_options.lambda);
      read(d, "tol", m.edit.search_options.tol);
      if (d.contains("search_mode"))
        m.edit.search_options.mode = editor::search_mode_from_string(d.at("search_mode").get<std::string>());
      read(d, "search_step", m.edit.search_options.step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Usage, std::string("bad manifest field: ") + e.what());
  }
  if (m.edit.fictitious) m.edit.clone.feature = *m.edit.fictitious;
  return m;
}

inline nlohmann::ordered_json manifest_to_json(const ExperimentManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["dataset"] = {{"builder", m.dataset.builder},
                  {"root", m.dataset.root},
                  {"val_count", m.dataset.val_count},
                  {"designated", m.dataset.designated},
                  {"train_limit", m.dataset.train_limit},
                  {"patch",
                   {{"size", m.dataset.patch.size},
                    {"corner", data::to_string(m.dataset.patch.corner)},
                    {"intensity", m.dataset.patch.intensity},
                    {"rho", m.dataset.patch.rho}}}};
  j["model"] = {{"arch", m.model.arch}, {"penultimate", m.model.penultimate}, {"hidden", m.model.hidden}};
  j["train"] = detail::train_to_json(m.train);
  j["attribution"] = {{"candidate_set", attribution::to_string(m.attribution.candidates)},
                      {"activation", attribution::to_string(m.attribution.mode)},
                      {"metric", attribution::to_string(m.attribution.metric)}};
  nlohmann::ordered_json e;
  if (m.edit.cls) e["class"] = *m.edit.cls;
  if (m.edit.fictitious) {
    if (*m.edit.fictitious == kWorstGroupFeature) {
      e["fictitious"] = "worst-group";
    } else {
      e["fictitious"] = *m.edit.fictitious;
    }
  }
  if (m.edit.target_class) e["target_class"] = *m.edit.target_class;
  e["rate"] = m.edit.rate;
  e["search"] = m.edit.search;
  e["label_mode"] = editor::to_string(m.edit.clone.mode);
  e["feature_source"] = editor::to_string(m.edit.clone.source);
  e["min_recall"] = m.edit.clone.min_recall;
  e["finetune_limit"] = m.edit.finetune_limit;
  e["finetune"] = detail::train_to_json(m.edit.clone.finetune);
  e["lambda"] = m.edit.search_options.lambda;
  e["tol"] = m.edit.search_options.tol;
  e["search_mode"] = editor::to_string(m.edit.search_options.mode);
  e["search_step"] = m.edit.search_options.step;
  j["edit"] = e;
  j["grid_step"] = m.grid_step;
  j["output"] = m.output;
  return j;
}

inline ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingInput, "missing manifest " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Usage, "manifest " + path.string() + " is not valid json: " + e.what());
  }
}

inline std::filesystem::path data_root(const DatasetConfig& d) {
  if (!d.root.empty()) return d.root;
  if (const char* env = std::getenv("FCR_DATA_DIR"); env && *env) return env;
  return "data/mnist";
}

inline data::DatasetSplits build_splits(const ExperimentManifest& m) {
  auto splits = data::load_mnist_splits(data_root(m.dataset), m.dataset.val_count, m.seed);
  if (m.dataset.builder == "parity" || m.dataset.builder == "corner-patch") splits = data::make_parity(splits);
  if (m.dataset.builder == "corner-patch") {
    splits = data::make_corner_patch(splits, m.dataset.patch, m.dataset.designated, m.seed);
  } else if (m.dataset.builder != "mnist" && m.dataset.builder != "parity") {
    throw Error(ErrorKind::Usage, "unknown dataset builder '" + m.dataset.builder + "'");
  }
  splits.train = data::head(splits.train, m.dataset.train_limit);
  return splits;
}

/// Replaces a "worst-group" fictitious feature by the attribute value of the
/// worst group of `model` on the validation split.
inline void resolve_fictitious(ExperimentManifest& m, const nn::Model& model, const data::DatasetSplits& splits) {
  if (!m.edit.fictitious || *m.edit.fictitious != kWorstGroupFeature) return;
  const auto report = eval::evaluate(model, splits.val, m.threads);
  if (!report.grouped()) throw Error(ErrorKind::MissingAttribute, "'worst-group' needs spurious-attribute labels");
  m.edit.fictitious = report.worst_group / static_cast<int>(splits.val.num_classes);
  m.edit.clone.feature = *m.edit.fictitious;
}

inline nn::Model build_model(const ExperimentManifest& m, const data::GroupedDataset& ds) {
  if (m.model.arch == "conv2net") return nn::make_conv2net(ds.shape, ds.num_classes, m.seed, m.model.penultimate);
  if (m.model.arch == "mlp") return nn::make_mlp(ds.shape, m.model.hidden, ds.num_classes, m.seed);
  throw Error(ErrorKind::UnsupportedArch, "unsupported arch '" + m.model.arch + "'");
}

inline std::string history_csv(const nn::TrainHistory& h) {
  std::string out = "epoch,loss,accuracy\n";
  for (const auto& e : h.epochs) out += std::to_string(e.epoch) + "," + fmt_real(e.loss) + "," + fmt_real(e.accuracy) + "\n";
  return out;
}

/// Trains a fresh model per the manifest and records the config in its meta.
inline std::pair<nn::Model, nn::TrainHistory> train_model(const ExperimentManifest& m, const data::GroupedDataset& train) {
  nn::Model model = build_model(m, train);
  auto history = nn::train(model, train.view(), m.train);
  model.meta().training = {{"config", detail::train_to_json(m.train)},
                           {"dataset_sha256", data::dataset_hash(train)},
                           {"builder", m.dataset.builder}};
  return {std::move(model), std::move(history)};
}

/// Model `m.output/<name>` if one with the same training record exists,
/// otherwise trains and saves it.
inline nn::Model cached_model(const ExperimentManifest& m, const data::GroupedDataset& train,
                              const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "manifest.json")) {
    auto model = nn::load(dir);
    if (model.meta().training.value("dataset_sha256", "") == data::dataset_hash(train) &&
        model.meta().training.value("config", nlohmann::json()) == nlohmann::json(detail::train_to_json(m.train)) &&
        model.meta().seed == m.seed) {
      return model;
    }
  }
  auto [model, history] = train_model(m, train);
  nn::save(model, dir);
  eval::write_file(dir / "history.csv", history_csv(history));
  return model;
}

}  // namespace fcr::cli
