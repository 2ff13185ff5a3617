// Copyright 2026 The MFHCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mfhca/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfhca/gradcheck.hpp"
#include "mfhca/trainer.hpp"

namespace fs = std::filesystem;

namespace mfhca {

namespace {

// Everything a run can configure, resolved from defaults, then the config
// file, then explicit command-line flags.
struct RunOptions {
  std::string config_path;
  std::string manifest;
  std::string checkpoint;
  std::string out_dir;
  uint64_t seed = 1;
  double lr = 1e-5;
  int batch = 32;
  int patience = 10;
  int max_epochs = 100;
  std::string grf_channels = "16,32,48";
  int ratio = 4;
  std::string ablate = "none";
  int d_model = 128;
  int bilstm_hidden = 128;
  int bins = 200;
  int mel_bins = 0;
  int n_per_class = 8;
  int feature_dim = 64;
  bool verbose = false;
};

std::vector<int> parse_channels(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("bad --grf-channels entry '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("--grf-channels must list at least one size");
  return out;
}

void check_ratio(int ratio) {
  if (ratio != 2 && ratio != 4 && ratio != 8 && ratio != 16)
    throw ValidationError("--ratio must be one of 2, 4, 8, 16");
}

// Plain key=value configuration file; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": expected key=value, got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Applies config-file values for options the command line did not set.
void merge_config_file(const std::map<std::string, std::string>& kv, CLI::App* cmd,
                       RunOptions& opt) {
  auto unset = [cmd](const std::string& flag) {
    auto* o = cmd->get_option_no_throw(flag);
    return o != nullptr && o->count() == 0;
  };
  for (const auto& [key, value] : kv) {
    try {
      if (key == "seed") { if (unset("--seed")) opt.seed = std::stoull(value); }
      else if (key == "lr") { if (unset("--lr")) opt.lr = std::stod(value); }
      else if (key == "batch") { if (unset("--batch")) opt.batch = std::stoi(value); }
      else if (key == "patience") { if (unset("--patience")) opt.patience = std::stoi(value); }
      else if (key == "max_epochs") { if (unset("--max-epochs")) opt.max_epochs = std::stoi(value); }
      else if (key == "grf_channels") { if (unset("--grf-channels")) opt.grf_channels = value; }
      else if (key == "ratio") { if (unset("--ratio")) opt.ratio = std::stoi(value); }
      else if (key == "ablate") { if (unset("--ablate")) opt.ablate = value; }
      else if (key == "d_model") { if (unset("--d-model")) opt.d_model = std::stoi(value); }
      else if (key == "bilstm_hidden") { if (unset("--bilstm-hidden")) opt.bilstm_hidden = std::stoi(value); }
      else if (key == "bins") { if (unset("--bins")) opt.bins = std::stoi(value); }
      else if (key == "mel_bins") { if (unset("--mel-bins")) opt.mel_bins = std::stoi(value); }
      else if (key == "n_per_class") { if (unset("--n-per-class")) opt.n_per_class = std::stoi(value); }
      else if (key == "feature_dim") { if (unset("--dim")) opt.feature_dim = std::stoi(value); }
      else if (key == "manifest") { if (unset("--manifest")) opt.manifest = value; }
      else if (key == "out") { if (unset("--out")) opt.out_dir = value; }
      else throw ValidationError("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ValidationError("bad value for config key '" + key + "': " + value);
    }
  }
}

std::string snapshot_text(const RunOptions& opt) {
  std::ostringstream os;
  os << "seed=" << opt.seed << "\n"
     << "lr=" << opt.lr << "\n"
     << "batch=" << opt.batch << "\n"
     << "patience=" << opt.patience << "\n"
     << "max_epochs=" << opt.max_epochs << "\n"
     << "grf_channels=" << opt.grf_channels << "\n"
     << "ratio=" << opt.ratio << "\n"
     << "ablate=" << opt.ablate << "\n"
     << "d_model=" << opt.d_model << "\n"
     << "bilstm_hidden=" << opt.bilstm_hidden << "\n"
     << "bins=" << opt.bins << "\n"
     << "mel_bins=" << opt.mel_bins << "\n"
     << "n_per_class=" << opt.n_per_class << "\n"
     << "feature_dim=" << opt.feature_dim << "\n";
  if (!opt.manifest.empty()) os << "manifest=" << opt.manifest << "\n";
  return os.str();
}

void write_snapshot(const RunOptions& opt) {
  if (opt.out_dir.empty()) return;
  fs::create_directories(opt.out_dir);
  std::ofstream f(fs::path(opt.out_dir) / "config_snapshot.txt");
  f << snapshot_text(opt);
}

FrontendConfig frontend_from(const RunOptions& opt) {
  FrontendConfig f;
  f.bins = opt.bins;
  f.mel_bins = opt.mel_bins;
  return f;
}

TrainConfig train_config_from(const RunOptions& opt) {
  TrainConfig t;
  t.lr = opt.lr;
  t.batch = opt.batch;
  t.patience = opt.patience;
  t.max_epochs = opt.max_epochs;
  t.seed = opt.seed;
  t.verbose = opt.verbose;
  t.validate();
  return t;
}

ModelConfig model_config_from(const RunOptions& opt, const Dataset& data) {
  check_ratio(opt.ratio);
  ModelConfig cfg;
  cfg.mf.grf_channels = parse_channels(opt.grf_channels);
  cfg.mf.ratio_den = opt.ratio;
  cfg.hca.d_model = opt.d_model;
  cfg.hca.bilstm_hidden = opt.bilstm_hidden;
  cfg.hca.hubert_dim = data.feature_dim > 0 ? data.feature_dim : 768;
  cfg.ablation = ablation_preset(opt.ablate);
  cfg.input_frames = data.spec_frames > 0 ? data.spec_frames : 297;
  cfg.input_bins = data.spec_bins > 0 ? data.spec_bins : opt.bins;
  cfg.validate();
  return cfg;
}

Dataset load_for(const RunOptions& opt, const AblationConfig& ab) {
  if (opt.manifest.empty()) throw ValidationError("--manifest is required");
  DatasetLoadOptions lo;
  lo.need_spec = ab.use_spec;
  lo.need_features = ab.use_feat;
  lo.frontend = frontend_from(opt);
  return load_dataset(opt.manifest, lo);
}

void write_fold_jsonl(const std::string& path, const LosoResult& res) {
  std::ofstream f(path);
  for (const auto& fold : res.folds) {
    nlohmann::json j{{"fold", fold.fold},
                     {"held_out_speaker", fold.held_out_speaker},
                     {"val_speaker", fold.val_speaker},
                     {"wa", fold.wa},
                     {"ua", fold.ua},
                     {"epochs", fold.epochs_trained}};
    std::vector<std::vector<int64_t>> cm;
    for (int i = 0; i < fold.cm.num_classes(); ++i) {
      std::vector<int64_t> row;
      for (int k = 0; k < fold.cm.num_classes(); ++k) row.push_back(fold.cm.at(i, k));
      cm.push_back(std::move(row));
    }
    j["confusion"] = cm;
    f << j.dump() << "\n";
  }
  nlohmann::json agg{{"aggregate", true}, {"mean_wa", res.mean_wa}, {"mean_ua", res.mean_ua}};
  f << agg.dump() << "\n";
}

// ---- commands ----

int cmd_synth_data(const RunOptions& opt) {
  if (opt.out_dir.empty()) throw ValidationError("--out is required");
  SyntheticSpec spec;
  spec.seed = opt.seed;
  spec.n_per_class = opt.n_per_class;
  spec.feature_dim = opt.feature_dim;
  auto manifest = make_synthetic(opt.out_dir, spec);
  write_snapshot(opt);
  std::cout << "wrote synthetic dataset: " << manifest << "\n";
  return 0;
}

int cmd_extract_features(const RunOptions& opt) {
  if (opt.out_dir.empty()) throw ValidationError("--out is required");
  if (opt.manifest.empty()) throw ValidationError("--manifest is required");
  const auto entries = load_manifest(opt.manifest);
  const fs::path base = fs::path(opt.manifest).parent_path();
  const fs::path spec_dir = fs::path(opt.out_dir) / "spec";
  fs::create_directories(spec_dir);
  const auto cfg = frontend_from(opt);
  for (const auto& e : entries) {
    fs::path wav_path(e.wav_path);
    if (!wav_path.is_absolute()) wav_path = base / wav_path;
    auto audio = load_wav(wav_path.string(), cfg.sample_rate);
    auto segs = segment(audio);
    FeatureSequence seq;
    seq.cols = cfg.out_bins();
    for (const auto& s : segs) {
      auto spec = log_spectrogram(s, cfg);
      seq.rows += spec.rows;
      seq.values.insert(seq.values.end(), spec.values.begin(), spec.values.end());
    }
    const auto out_path = spec_dir / (e.utterance_id + ".mfh");
    write_feature_file(out_path.string(), seq);
    std::cout << e.utterance_id << ": " << segs.size() << " segments, " << seq.rows << "x"
              << seq.cols << " -> " << out_path.string() << "\n";
  }
  write_snapshot(opt);
  return 0;
}

int cmd_params(const RunOptions& opt) {
  check_ratio(opt.ratio);
  ModelConfig cfg;
  cfg.mf.grf_channels = parse_channels(opt.grf_channels);
  cfg.mf.ratio_den = opt.ratio;
  cfg.hca.d_model = opt.d_model;
  cfg.hca.bilstm_hidden = opt.bilstm_hidden;
  cfg.hca.hubert_dim = 768;  // nominal external-feature width
  cfg.ablation = ablation_preset(opt.ablate);
  cfg.input_bins = opt.bins;
  cfg.validate();
  auto params = ModelParams<float>::make(cfg, opt.seed);
  std::cout << "total learnable parameters: " << params.count_params() << "\n";
  for (const auto& [mod, n] : params.count_params_by_module())
    std::cout << "  " << mod << ": " << n << "\n";
  return 0;
}

int cmd_gradcheck(const RunOptions& opt) {
  auto results = run_gradcheck_suite(opt.seed);
  const double tol = 1e-4;
  for (const auto& r : results)
    std::cout << (r.max_rel_error < tol ? "ok   " : "FAIL ") << r.name
              << " max_rel_error=" << r.max_rel_error << "\n";
  if (!gradcheck_suite_passed(results, tol)) {
    std::cerr << "gradient check failed (tolerance " << tol << ")\n";
    return 3;
  }
  std::cout << "all operators within " << tol << "\n";
  return 0;
}

int cmd_train(const RunOptions& opt) {
  const auto ab = ablation_preset(opt.ablate);
  auto data = load_for(opt, ab);
  auto model_cfg = model_config_from(opt, data);
  auto tcfg = train_config_from(opt);
  const auto spks = data.speakers();
  if (spks.size() < 2) throw ValidationError("train: need at least 2 speakers for a val split");
  std::mt19937 rng(static_cast<uint32_t>(opt.seed));
  const std::string val_spk = spks[rng() % spks.size()];
  std::vector<int> train_idx, val_idx;
  for (size_t i = 0; i < data.samples.size(); ++i) {
    if (data.samples[i].speaker == val_spk) val_idx.push_back(static_cast<int>(i));
    else train_idx.push_back(static_cast<int>(i));
  }
  SpecNormalizer norm;
  if (ab.use_spec) {
    std::vector<const Spectrogram*> specs;
    for (int i : train_idx) specs.push_back(&data.samples[static_cast<size_t>(i)].spec);
    norm = fit_normalizer(specs);
  }
  auto params = ModelParams<float>::make(model_cfg, opt.seed);
  auto res = train_fold(params, data, norm, train_idx, val_idx, tcfg);
  std::cout << "trained " << res.epochs_trained << " epochs; best val UA " << res.best_val_ua
            << " at epoch " << res.best_epoch << " (val speaker " << val_spk << ")\n";
  if (!opt.out_dir.empty()) {
    write_snapshot(opt);
    std::vector<TensorRecord> extra;
    extra.push_back({"norm.mean", {1}, {static_cast<float>(norm.mean)}});
    extra.push_back({"norm.stddev", {1}, {static_cast<float>(norm.stddev)}});
    extra.push_back({"frontend.bins", {1}, {static_cast<float>(opt.bins)}});
    extra.push_back({"frontend.mel_bins", {1}, {static_cast<float>(opt.mel_bins)}});
    const auto ckpt = (fs::path(opt.out_dir) / "model.mfc").string();
    save_checkpoint(ckpt, params, extra);
    std::ofstream hist(fs::path(opt.out_dir) / "history.jsonl");
    for (const auto& e : res.history) {
      nlohmann::json j{{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"val_ua", e.val_ua}};
      hist << j.dump() << "\n";
    }
    std::cout << "checkpoint: " << ckpt << "\n";
  }
  return 0;
}

struct CheckpointRun {
  ModelParams<float> params;
  SpecNormalizer norm;
  FrontendConfig frontend;
};

CheckpointRun load_checkpoint_run(const std::string& path) {
  if (path.empty()) throw ValidationError("--checkpoint is required");
  auto loaded = load_checkpoint(path);
  CheckpointRun run{std::move(loaded.params), {}, {}};
  for (const auto& rec : loaded.extra) {
    if (rec.name == "norm.mean") run.norm.mean = rec.data.at(0);
    else if (rec.name == "norm.stddev") run.norm.stddev = rec.data.at(0);
    else if (rec.name == "frontend.bins") run.frontend.bins = static_cast<int>(rec.data.at(0));
    else if (rec.name == "frontend.mel_bins") run.frontend.mel_bins = static_cast<int>(rec.data.at(0));
  }
  return run;
}

int cmd_eval(const RunOptions& opt) {
  auto run = load_checkpoint_run(opt.checkpoint);
  if (opt.manifest.empty()) throw ValidationError("--manifest is required");
  DatasetLoadOptions lo;
  lo.need_spec = run.params.cfg.ablation.use_spec;
  lo.need_features = run.params.cfg.ablation.use_feat;
  lo.frontend = run.frontend;
  auto data = load_dataset(opt.manifest, lo);
  std::vector<int> idx(data.samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  auto res = evaluate(run.params, data, run.norm, idx, opt.batch);
  std::cout << "WA " << res.wa << "  UA " << res.ua << "\n";
  std::cout << res.cm.to_string({kEmotionLabels.begin(), kEmotionLabels.end()});
  if (!opt.out_dir.empty()) {
    write_snapshot(opt);
    std::ofstream f(fs::path(opt.out_dir) / "metrics.jsonl");
    nlohmann::json j{{"wa", res.wa}, {"ua", res.ua}};
    f << j.dump() << "\n";
  }
  return 0;
}

int cmd_loso(const RunOptions& opt) {
  const auto ab = ablation_preset(opt.ablate);
  auto data = load_for(opt, ab);
  auto model_cfg = model_config_from(opt, data);
  auto tcfg = train_config_from(opt);
  auto res = loso_cv(model_cfg, data, tcfg);
  std::ostringstream table;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-6s %-12s %8s %8s %8s\n", "fold", "speaker", "WA",
                "UA", "epochs");
  table << buf;
  for (const auto& f : res.folds) {
    std::snprintf(buf, sizeof(buf), "%-6d %-12s %8.4f %8.4f %8d\n", f.fold,
                  f.held_out_speaker.c_str(), f.wa, f.ua, f.epochs_trained);
    table << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-6s %-12s %8.4f %8.4f\n", "mean", "", res.mean_wa,
                res.mean_ua);
  table << buf;
  std::cout << table.str();
  if (!opt.out_dir.empty()) {
    write_snapshot(opt);
    write_fold_jsonl((fs::path(opt.out_dir) / "folds.jsonl").string(), res);
    std::ofstream t(fs::path(opt.out_dir) / "folds.txt");
    t << table.str();
  }
  return 0;
}

int cmd_ablate(const RunOptions& opt) {
  RunOptions full = opt;
  full.ablate = "none";  // the driver sweeps its own variants
  auto data = load_for(full, ablation_preset("none"));
  auto model_cfg = model_config_from(full, data);
  auto tcfg = train_config_from(full);
  auto rows = ablation_run(model_cfg, data, tcfg);
  std::cout << ablation_table(rows);
  if (!opt.out_dir.empty()) {
    write_snapshot(full);
    std::ofstream f(fs::path(opt.out_dir) / "ablation.jsonl");
    for (const auto& r : rows) {
      nlohmann::json j{{"variant", r.name}, {"uses_spec", r.uses_spec},
                       {"uses_feat", r.uses_feat}, {"mf", r.mf},
                       {"hca", r.hca},             {"params", r.param_count},
                       {"wa", r.wa},               {"ua", r.ua}};
      f << j.dump() << "\n";
    }
    std::ofstream t(fs::path(opt.out_dir) / "ablation.txt");
    t << ablation_table(rows);
  }
  return 0;
}

int cmd_dump_embeddings(const RunOptions& opt) {
  auto run = load_checkpoint_run(opt.checkpoint);
  if (opt.manifest.empty()) throw ValidationError("--manifest is required");
  if (opt.out_dir.empty()) throw ValidationError("--out is required");
  DatasetLoadOptions lo;
  lo.need_spec = run.params.cfg.ablation.use_spec;
  lo.need_features = run.params.cfg.ablation.use_feat;
  lo.frontend = run.frontend;
  auto data = load_dataset(opt.manifest, lo);
  run.params.set_training(false);

  // Mean pooled embedding over each utterance's segments; one segment per
  // forward pass, so variable lengths never mix.
  std::map<std::string, std::pair<std::vector<double>, int>> agg;
  std::map<std::string, const Sample*> meta;
  for (size_t i = 0; i < data.samples.size(); ++i) {
    Tensor32 spec, feats;
    const auto& smp = data.samples[i];
    if (run.params.cfg.ablation.use_spec) {
      spec = Tensor32::zeros({1, 1, smp.spec.rows, smp.spec.cols});
      const float mu = static_cast<float>(run.norm.mean);
      const float inv = static_cast<float>(1.0 / run.norm.stddev);
      for (size_t j = 0; j < smp.spec.values.size(); ++j)
        spec.data()[j] = (smp.spec.values[j] - mu) * inv;
    }
    if (run.params.cfg.ablation.use_feat) {
      feats = Tensor32::zeros({1, smp.feats.rows, smp.feats.cols});
      std::copy(smp.feats.values.begin(), smp.feats.values.end(), feats.data().begin());
    }
    auto out = model_forward(run.params, spec, feats);
    auto& [sum, count] = agg[smp.utterance_id];
    if (sum.empty()) sum.assign(static_cast<size_t>(out.embedding.numel()), 0.0);
    for (int64_t k = 0; k < out.embedding.numel(); ++k)
      sum[static_cast<size_t>(k)] += out.embedding.data()[static_cast<size_t>(k)];
    count += 1;
    meta[smp.utterance_id] = &smp;
  }

  fs::create_directories(opt.out_dir);
  FeatureSequence emb;
  emb.rows = static_cast<int>(agg.size());
  emb.cols = agg.empty() ? 0 : static_cast<int>(agg.begin()->second.first.size());
  std::ofstream index(fs::path(opt.out_dir) / "embeddings_index.jsonl");
  int row = 0;
  for (const auto& [utt, sc] : agg) {
    for (double v : sc.first)
      emb.values.push_back(static_cast<float>(v / sc.second));
    const auto* smp = meta[utt];
    nlohmann::json j{{"row", row},
                     {"utterance_id", utt},
                     {"label", kEmotionLabels[static_cast<size_t>(smp->label)]},
                     {"speaker", smp->speaker}};
    index << j.dump() << "\n";
    ++row;
  }
  const auto emb_path = (fs::path(opt.out_dir) / "embeddings.mfh").string();
  write_feature_file(emb_path, emb);
  write_snapshot(opt);
  std::cout << "wrote " << emb.rows << "x" << emb.cols << " embeddings to " << emb_path
            << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"MFHCA speech emotion recognition"};
  app.require_subcommand(1);

  RunOptions opt;
  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "key=value configuration file");
    cmd->add_option("--manifest", opt.manifest, "JSON-Lines dataset manifest");
    cmd->add_option("--seed", opt.seed, "master random seed");
    cmd->add_option("--lr", opt.lr, "learning rate");
    cmd->add_option("--batch", opt.batch, "batch size");
    cmd->add_option("--patience", opt.patience, "early-stopping patience (epochs)");
    cmd->add_option("--max-epochs", opt.max_epochs, "epoch cap");
    cmd->add_option("--grf-channels", opt.grf_channels, "per-stage channels, e.g. 16,32,48");
    cmd->add_option("--ratio", opt.ratio, "sampling-ratio denominator (2, 4, 8 or 16)");
    cmd->add_option("--ablate", opt.ablate,
                    "none|no-mf|no-hca|no-mf-no-hca|spec-only|feat-only");
    cmd->add_option("--d-model", opt.d_model, "shared projection width");
    cmd->add_option("--bilstm-hidden", opt.bilstm_hidden, "BiLSTM width per direction");
    cmd->add_option("--bins", opt.bins, "spectrogram bins kept");
    cmd->add_option("--mel-bins", opt.mel_bins, "mel bands (0 = linear bins)");
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--checkpoint", opt.checkpoint, "model checkpoint path");
    cmd->add_option("--n-per-class", opt.n_per_class, "synthetic utterances per class");
    cmd->add_option("--dim", opt.feature_dim, "synthetic feature width");
    cmd->add_flag("--verbose", opt.verbose, "progress on stderr");
    return cmd;
  };

  std::map<std::string, std::pair<CLI::App*, int (*)(const RunOptions&)>> commands;
  commands["extract-features"] = {add_common(app.add_subcommand(
                                      "extract-features", "write log-spectrogram files")),
                                  &cmd_extract_features};
  commands["synth-data"] = {
      add_common(app.add_subcommand("synth-data", "generate a synthetic dataset")),
      &cmd_synth_data};
  commands["train"] = {add_common(app.add_subcommand("train", "train one split")),
                       &cmd_train};
  commands["eval"] = {add_common(app.add_subcommand("eval", "evaluate a checkpoint")),
                      &cmd_eval};
  commands["loso"] = {
      add_common(app.add_subcommand("loso", "leave-one-speaker-out cross-validation")),
      &cmd_loso};
  commands["ablate"] = {
      add_common(app.add_subcommand("ablate", "run the ablation grid")),
      &cmd_ablate};
  commands["gradcheck"] = {
      add_common(app.add_subcommand("gradcheck", "finite-difference gradient suite")),
      &cmd_gradcheck};
  commands["params"] = {
      add_common(app.add_subcommand("params", "report parameter counts")),
      &cmd_params};
  commands["dump-embeddings"] = {
      add_common(app.add_subcommand("dump-embeddings", "write pooled fused features")),
      &cmd_dump_embeddings};

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& [name, entry] : commands) {
      auto& [cmd, fn] = entry;
      if (cmd->parsed()) {
        if (!opt.config_path.empty())
          merge_config_file(read_config_file(opt.config_path), cmd, opt);
        return fn(opt);
      }
    }
    std::cerr << "no command given\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full{"mfhca"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mfhca
