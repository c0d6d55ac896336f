#include "mgt/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"
#include "mgt/metrics.hpp"
#include "mgt/report.hpp"
#include "mgt/sampling.hpp"
#include "mgt/synthetic.hpp"
#include "mgt/trainer.hpp"

namespace mgt {

namespace {

using json = nlohmann::json;

constexpr int kManifestVersion = 1;

struct StageInfo {
  Stage stage;
  const char* name;
  std::vector<Stage> requires_stages;
  /// Artifact a later stage names when this one has not run.
  const char* key_artifact;
};

const std::vector<StageInfo>& stage_table() {
  static const std::vector<StageInfo> table = {
      {Stage::generate, "generate", {}, "data/train.corpus"},
      {Stage::train_baseline, "train-baseline", {Stage::generate}, "baseline/best.ckpt"},
      {Stage::build_buckets, "build-buckets", {Stage::train_baseline}, "buckets/level_1.corpus"},
      {Stage::train_mgt, "train-mgt", {Stage::build_buckets}, "mgt/mgt.bundle"},
      {Stage::evaluate, "evaluate", {Stage::train_mgt}, "reports/eval_metrics.txt"},
      {Stage::probe, "probe", {Stage::train_mgt}, "reports/probe_metrics.txt"},
      {Stage::report, "report", {Stage::evaluate, Stage::probe}, "reports/summary.txt"},
  };
  return table;
}

const StageInfo& info(Stage s) {
  for (const auto& i : stage_table()) {
    if (i.stage == s) {
      return i;
    }
  }
  throw ContractError("unknown stage");
}

std::string write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw IntegrityError("cannot write " + path.string());
  }
  return text;
}

std::string epoch_suffix(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_epoch_%02d", epoch);
  return buf;
}

std::string level_name(int level) { return "level_" + std::to_string(level); }

std::vector<std::pair<int, int>> r_specs(int k) {
  std::vector<std::pair<int, int>> out;
  for (auto [n, top] : std::vector<std::pair<int, int>>{{2, 1}, {5, 1}, {10, 1}, {10, 2}, {10, 5}}) {
    if (n <= k) {
      out.emplace_back(n, top);
    }
  }
  return out;
}

void put_report(KeyValues& kv, const std::string& name, const EvalReport& r) {
  kv["retrieval." + name + ".mrr"] = format_metric(r.mrr);
  kv["retrieval." + name + ".hits_at_1"] = format_metric(r.hits_at_1);
  for (const auto& e : r.r_n_at_k) {
    kv["retrieval." + name + ".r" + std::to_string(e.n) + "_at_" + std::to_string(e.k)] =
        format_metric(e.value);
  }
  kv["retrieval." + name + ".count"] = std::to_string(r.count);
}

void put_probe(KeyValues& kv, const std::string& prefix, const ProbeResult& r) {
  const std::string key = prefix + "." + (r.kind == ProbeKind::bag_of_words ? "bow" : "abstract");
  kv[key + ".f1"] = format_metric(r.test.f1);
  kv[key + ".precision"] = format_metric(r.test.precision);
  kv[key + ".recall"] = format_metric(r.test.recall);
  kv[key + ".valid_f1"] = format_metric(r.valid_f1);
  kv[key + ".excluded_labels"] = std::to_string(r.excluded_labels.size());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      out.push_back(line);
    }
  }
  return out;
}

}  // namespace

const char* stage_name(Stage stage) { return info(stage).name; }

std::optional<Stage> parse_stage(const std::string& name) {
  for (const auto& i : stage_table()) {
    if (name == i.name) {
      return i.stage;
    }
  }
  return std::nullopt;
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::generate,  Stage::train_baseline,
                                            Stage::build_buckets, Stage::train_mgt,
                                            Stage::evaluate,  Stage::probe,
                                            Stage::report};
  return stages;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open manifest " + path.string());
  }
  json j;
  try {
    in >> j;
    if (j.at("version").get<int>() != kManifestVersion) {
      throw ParseError(path.string() + ": unsupported manifest version");
    }
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::string>();
    for (const auto& [name, st] : j.at("stages").items()) {
      StageRecord r;
      r.complete = st.at("complete").get<bool>();
      r.options = st.at("options").get<std::string>();
      r.artifacts = st.at("artifacts").get<std::map<std::string, std::string>>();
      m.stages[name] = std::move(r);
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed manifest: " + e.what());
  }
}

void RunManifest::save(const std::filesystem::path& path) const {
  json j;
  j["version"] = kManifestVersion;
  j["run_id"] = run_id;
  j["seed"] = seed;
  j["config"] = config;
  j["stages"] = json::object();
  for (const auto& [name, r] : stages) {
    j["stages"][name] = {{"complete", r.complete}, {"options", r.options}, {"artifacts", r.artifacts}};
  }
  const auto tmp = path.string() + ".tmp";
  write_text(tmp, j.dump(2) + "\n");
  std::filesystem::rename(tmp, path);
}

std::string StageOptions::describe(Stage stage) const {
  std::string out;
  if (stage == Stage::evaluate) {
    for (auto m : ensemble_modes) {
      out += (out.empty() ? "ensemble=" : ",") + to_string(m);
    }
  } else if (stage == Stage::probe) {
    for (auto k : probe_tasks) {
      out += (out.empty() ? "tasks=" : ",") + to_string(k);
    }
    out += finetune ? " finetune=on" : " finetune=off";
  }
  return out;
}

Pipeline::Pipeline(std::filesystem::path run_dir, Config config)
    : dir_(std::move(run_dir)), config_(std::move(config)) {
  validate_config(config_);
  const std::string snapshot = format_config(config_);
  const auto manifest_path = path("manifest.json");
  if (std::filesystem::exists(manifest_path)) {
    manifest_ = RunManifest::load(manifest_path);
    if (manifest_.config != snapshot) {
      const KeyValues before = parse_key_values(manifest_.config, "manifest");
      const KeyValues after = parse_key_values(snapshot, "config");
      std::string changed;
      for (const auto& [key, value] : after) {
        auto it = before.find(key);
        if (it == before.end() || it->second != value) {
          changed += (changed.empty() ? "" : ", ") + key + " (" +
                     (it == before.end() ? "unset" : it->second) + " -> " + value + ")";
        }
      }
      throw DriftError("config differs from the snapshot in " + manifest_path.string() + ": " +
                       changed + "; use a fresh --run-dir");
    }
  } else {
    std::filesystem::create_directories(dir_);
    manifest_.config = snapshot;
    manifest_.seed = config_.seed;
    manifest_.run_id = to_hex(hash_bytes(snapshot));
    save_manifest();
  }
}

void Pipeline::save_manifest() const { manifest_.save(path("manifest.json")); }

void Pipeline::verify_stage(Stage stage) const {
  auto it = manifest_.stages.find(stage_name(stage));
  if (it == manifest_.stages.end() || !it->second.complete) {
    return;
  }
  for (const auto& [rel, hex] : it->second.artifacts) {
    const auto p = path(rel);
    if (!std::filesystem::exists(p)) {
      throw IntegrityError("artifact " + rel + " of stage " + stage_name(stage) + " is missing");
    }
    if (to_hex(hash_file(p)) != hex) {
      throw IntegrityError("artifact " + rel + " of stage " + stage_name(stage) +
                           " changed since it was recorded (expected " + hex + ")");
    }
  }
}

void Pipeline::verify() const {
  for (Stage s : all_stages()) {
    verify_stage(s);
  }
}

bool Pipeline::run(Stage stage, const StageOptions& options) {
  const StageInfo& me = info(stage);
  for (Stage pre : me.requires_stages) {
    auto it = manifest_.stages.find(stage_name(pre));
    if (it == manifest_.stages.end() || !it->second.complete) {
      throw StageOrderError(std::string(me.name) + " needs " + info(pre).key_artifact +
                            ", which stage " + stage_name(pre) + " has not produced yet");
    }
  }
  // Everything upstream must still be what the manifest recorded.
  for (Stage s : all_stages()) {
    if (s == stage) {
      break;
    }
    verify_stage(s);
  }

  const std::string opts = options.describe(stage);
  auto& record = manifest_.stages[me.name];
  if (record.complete && record.options == opts) {
    verify_stage(stage);
    spdlog::info("stage {} already complete; nothing to do", me.name);
    return false;
  }

  // Re-running a stage invalidates everything downstream of it.
  bool downstream = false;
  for (Stage s : all_stages()) {
    if (s == stage) {
      downstream = true;
    }
    if (downstream) {
      manifest_.stages[stage_name(s)].complete = false;
    }
  }
  save_manifest();

  spdlog::info("stage {} starting", me.name);
  std::vector<std::string> produced;
  switch (stage) {
    case Stage::generate: produced = generate(); break;
    case Stage::train_baseline: produced = train_baseline(); break;
    case Stage::build_buckets: produced = build_buckets(); break;
    case Stage::train_mgt: produced = train_mgt(); break;
    case Stage::evaluate: produced = evaluate(options); break;
    case Stage::probe: produced = probe(options); break;
    case Stage::report: produced = report(); break;
  }
  auto& done = manifest_.stages[me.name];
  done.artifacts.clear();
  for (const auto& rel : produced) {
    done.artifacts[rel] = to_hex(hash_file(path(rel)));
  }
  done.options = opts;
  done.complete = true;
  save_manifest();
  spdlog::info("stage {} complete ({} artifacts)", me.name, produced.size());
  return true;
}

void Pipeline::run_all(const StageOptions& options) {
  for (Stage s : all_stages()) {
    run(s, options);
  }
}

// ---- stages -----------------------------------------------------------------

std::vector<std::string> Pipeline::generate() {
  std::string spec_text;
  GeneratorSpec spec;
  if (config_.generator_spec.empty()) {
    spec_text = default_generator_spec_text();
    spec = default_generator_spec();
  } else {
    std::ifstream in(config_.generator_spec, std::ios::binary);
    if (!in) {
      throw ConfigError("cannot open generator spec " + config_.generator_spec);
    }
    std::ostringstream text;
    text << in.rdbuf();
    spec_text = text.str();
    spec = parse_generator_spec(parse_key_values(spec_text, config_.generator_spec));
  }
  const SplitSizes sizes{config_.train_dialogs, config_.valid_dialogs, config_.test_dialogs};
  SyntheticCorpus corpus = generate_synthetic_corpus(spec, sizes, config_.k, config_.seed);
  std::filesystem::create_directories(path("data"));
  write_text(path("data/generator_spec.txt"), spec_text);
  write_corpus(corpus.train, path("data/train.corpus"));
  write_corpus(corpus.valid, path("data/valid.corpus"));
  write_corpus(corpus.test, path("data/test.corpus"));
  std::string topics;
  for (const auto& t : corpus.topic_names) {
    topics += t + "\n";
  }
  write_text(path("data/topics.txt"), topics);
  const Vocabulary vocab = build_vocab(corpus.train, static_cast<std::size_t>(config_.max_vocab));
  vocab.save(path("data/vocab.txt"));
  spdlog::info("generated {}/{}/{} dialogs over {} topics, vocabulary {}", corpus.train.size(),
               corpus.valid.size(), corpus.test.size(), corpus.topic_names.size(), vocab.size());
  return {"data/generator_spec.txt", "data/train.corpus", "data/valid.corpus", "data/test.corpus",
          "data/topics.txt", "data/vocab.txt"};
}

std::vector<std::string> Pipeline::train_baseline() {
  const Split train = load_corpus(path("data/train.corpus"));
  const Split valid = load_corpus(path("data/valid.corpus"));
  const Vocabulary vocab = Vocabulary::load(path("data/vocab.txt"));
  std::filesystem::create_directories(path("baseline"));
  std::vector<std::string> produced;

  CorpusBuildOptions opts{config_.levels, config_.k, config_.seed, config_.truncation, 0};
  std::vector<TrainingCorpus> corpora;
  const int distinct = config_.resample_per_epoch ? config_.epochs : 1;
  for (int e = 0; e < distinct; ++e) {
    opts.epoch = e;
    corpora.push_back(build_uniform_corpus(train, vocab, opts));
    const std::string rel =
        config_.resample_per_epoch ? "baseline/uniform" + epoch_suffix(e + 1) + ".corpus"
                                   : std::string("baseline/uniform.corpus");
    write_training_corpus(corpora.back(), path(rel));
    produced.push_back(rel);
  }

  const auto pool = pool_token_ids(train, vocab);
  const EvalSet valid_set = make_eval_set(valid, vocab, config_.truncation);
  DualEncoder model = init_dual_encoder(vocab.size(), config_.emb_dim, config_.hidden,
                                        mix_seed(config_.seed, 0x62617365ULL), vocab.hash());
  TrainResult result = mgt::train(
      model, [&](int epoch) -> const TrainingCorpus& {
        return corpora[static_cast<std::size_t>((epoch - 1) % distinct)];
      },
      pool, valid_set, config_, path("baseline"), "baseline");

  save_checkpoint(result.best_model, path("baseline/best.ckpt"));
  produced.push_back("baseline/best.ckpt");
  std::string log = "epoch\ttrain_loss\tvalid_mrr\n";
  for (const auto& rec : result.epochs) {
    log += std::to_string(rec.epoch) + "\t" + format_metric(rec.train_loss) + "\t" +
           format_metric(rec.valid_mrr) + "\n";
    produced.push_back("baseline/" + rec.checkpoint.filename().string());
  }
  write_text(path("baseline/train_log.tsv"), log);
  produced.push_back("baseline/train_log.tsv");

  const auto top = result.top(static_cast<std::size_t>(config_.levels));
  if (top.size() < static_cast<std::size_t>(config_.levels)) {
    spdlog::warn("only {} epochs available for a {}-member vanilla ensemble", top.size(),
                 config_.levels);
  }
  std::vector<DualEncoder> members;
  std::vector<std::filesystem::path> paths;
  for (std::size_t i : top) {
    members.push_back(load_checkpoint(result.epochs[i].checkpoint));
    paths.push_back(result.epochs[i].checkpoint);
  }
  EnsembleBundle(EnsembleMode::vanilla, std::move(members), std::move(paths))
      .save(path("baseline/vanilla.bundle"));
  produced.push_back("baseline/vanilla.bundle");

  KeyValues kv;
  kv["train.baseline.best_epoch"] = std::to_string(result.epochs[result.best].epoch);
  kv["train.baseline.best_valid_mrr"] = format_metric(result.epochs[result.best].valid_mrr);
  kv["train.baseline.untrained_valid_mrr"] = format_metric(result.untrained_valid_mrr);
  write_text(path("baseline/metrics.txt"), format_key_values(kv));
  produced.push_back("baseline/metrics.txt");
  return produced;
}

std::vector<std::string> Pipeline::build_buckets() {
  const Split train = load_corpus(path("data/train.corpus"));
  const Vocabulary vocab = Vocabulary::load(path("data/vocab.txt"));
  const auto ckpt = path("baseline/best.ckpt");
  const DualEncoder baseline = load_checkpoint(ckpt);
  std::filesystem::create_directories(path("buckets"));
  std::vector<std::string> produced;

  const ResponsePool pool = build_pool(train, vocab, baseline);
  pool.save(path("buckets/pool.txt"));
  produced.push_back("buckets/pool.txt");

  const std::uint64_t fp = checkpoint_fingerprint(ckpt);
  CorpusBuildOptions opts{config_.levels, config_.k, config_.seed, config_.truncation, 0};
  const int distinct = config_.resample_per_epoch ? config_.epochs : 1;
  KeyValues kv;
  for (int e = 0; e < distinct; ++e) {
    opts.epoch = e;
    const CorporaSet set = build_corpora(train, vocab, pool, fp, opts);
    for (const auto& corpus : set.levels) {
      const std::string rel = "buckets/" + level_name(corpus.level) +
                              (config_.resample_per_epoch ? epoch_suffix(e + 1) : "") + ".corpus";
      write_training_corpus(corpus, path(rel));
      produced.push_back(rel);
    }
    if (e == 0) {
      kv["negatives.baseline.mean_cosine"] =
          format_metric(mean_negative_similarity(set.baseline, pool));
      for (const auto& corpus : set.levels) {
        kv["negatives." + level_name(corpus.level) + ".mean_cosine"] =
            format_metric(mean_negative_similarity(corpus, pool));
      }
      write_text(path("buckets/levels_example.txt"), describe_levels(train, set, 0));
      produced.push_back("buckets/levels_example.txt");
    }
  }
  if (pool.perturbed_rows() > 0) {
    kv["pool.perturbed_rows"] = std::to_string(pool.perturbed_rows());
  }
  write_text(path("buckets/similarity.txt"), format_key_values(kv));
  produced.push_back("buckets/similarity.txt");
  return produced;
}

std::vector<std::string> Pipeline::train_mgt() {
  const Split train = load_corpus(path("data/train.corpus"));
  const Split valid = load_corpus(path("data/valid.corpus"));
  const Vocabulary vocab = Vocabulary::load(path("data/vocab.txt"));
  const auto pool = pool_token_ids(train, vocab);
  const EvalSet valid_set = make_eval_set(valid, vocab, config_.truncation);
  std::filesystem::create_directories(path("mgt"));
  std::vector<std::string> produced;
  KeyValues kv;

  std::vector<DualEncoder> members;
  std::vector<std::filesystem::path> paths;
  for (int l = 1; l <= config_.levels; ++l) {
    const int distinct = config_.resample_per_epoch ? config_.epochs : 1;
    std::vector<TrainingCorpus> corpora;
    for (int e = 0; e < distinct; ++e) {
      const std::string rel = "buckets/" + level_name(l) +
                              (config_.resample_per_epoch ? epoch_suffix(e + 1) : "") + ".corpus";
      if (!std::filesystem::exists(path(rel))) {
        throw StageOrderError("train-mgt needs " + rel + "; run build-buckets first");
      }
      corpora.push_back(load_training_corpus(path(rel)));
    }
    DualEncoder model =
        init_dual_encoder(vocab.size(), config_.emb_dim, config_.hidden,
                          mix_seed(config_.seed, static_cast<std::uint64_t>(l)), vocab.hash());
    model.granularity_level = l;
    TrainResult result = mgt::train(
        model, [&](int epoch) -> const TrainingCorpus& {
          return corpora[static_cast<std::size_t>((epoch - 1) % distinct)];
        },
        pool, valid_set, config_, path("mgt"), level_name(l));
    const std::string best_rel = "mgt/" + level_name(l) + "_best.ckpt";
    save_checkpoint(result.best_model, path(best_rel));
    produced.push_back(best_rel);
    for (const auto& rec : result.epochs) {
      produced.push_back("mgt/" + rec.checkpoint.filename().string());
    }
    kv["train." + level_name(l) + ".best_epoch"] = std::to_string(result.epochs[result.best].epoch);
    kv["train." + level_name(l) + ".best_valid_mrr"] =
        format_metric(result.epochs[result.best].valid_mrr);
    members.push_back(std::move(result.best_model));
    paths.push_back(path(best_rel));
  }
  EnsembleBundle(EnsembleMode::mgt, std::move(members), std::move(paths))
      .save(path("mgt/mgt.bundle"));
  produced.push_back("mgt/mgt.bundle");
  write_text(path("mgt/metrics.txt"), format_key_values(kv));
  produced.push_back("mgt/metrics.txt");
  return produced;
}

std::vector<std::string> Pipeline::evaluate(const StageOptions& options) {
  const Split test = load_corpus(path("data/test.corpus"));
  const Vocabulary vocab = Vocabulary::load(path("data/vocab.txt"));
  const EvalSet set = make_eval_set(test, vocab, config_.truncation);
  const auto specs = r_specs(config_.k);
  std::filesystem::create_directories(path("reports"));
  std::vector<std::string> produced;
  KeyValues kv;

  auto record = [&](const std::string& name, const std::vector<std::vector<double>>& scores) {
    const EvalReport r = evaluate_scores(scores, set.truth, specs);
    put_report(kv, name, r);
    const std::string rel = "reports/ranks_" + name + ".txt";
    write_ranks(r.ranks, path(rel));
    produced.push_back(rel);
    spdlog::info("{}: MRR {:.4f} Hits@1 {:.4f}", name, r.mrr, r.hits_at_1);
  };

  const DualEncoder baseline = load_checkpoint(path("baseline/best.ckpt"));
  if (baseline.vocab_hash != vocab.hash()) {
    throw IntegrityError("baseline checkpoint does not match data/vocab.txt");
  }
  record("baseline", candidate_logits(baseline, set));
  const EnsembleBundle mgt_bundle = EnsembleBundle::load(path("mgt/mgt.bundle"));
  for (std::size_t l = 0; l < mgt_bundle.size(); ++l) {
    record(level_name(static_cast<int>(l + 1)), candidate_logits(mgt_bundle.members()[l], set));
  }
  for (EnsembleMode mode : options.ensemble_modes) {
    const EnsembleBundle bundle = mode == EnsembleMode::mgt
                                      ? mgt_bundle
                                      : EnsembleBundle::load(path("baseline/vanilla.bundle"));
    if (bundle.vocab_hash() != vocab.hash()) {
      throw IntegrityError(to_string(mode) + " bundle does not match data/vocab.txt");
    }
    kv["retrieval." + to_string(mode) + ".members"] = std::to_string(bundle.size());
    record(to_string(mode), ensemble_probabilities(bundle, set));
  }
  write_text(path("reports/eval_metrics.txt"), format_key_values(kv));
  produced.push_back("reports/eval_metrics.txt");
  return produced;
}

std::vector<std::string> Pipeline::probe(const StageOptions& options) {
  const Split train = load_corpus(path("data/train.corpus"));
  const Split valid = load_corpus(path("data/valid.corpus"));
  const Split test = load_corpus(path("data/test.corpus"));
  const Vocabulary vocab = Vocabulary::load(path("data/vocab.txt"));
  const int topics = static_cast<int>(read_lines(path("data/topics.txt")).size());
  const ProbeSuite suite = make_probe_suite(train, valid, test, vocab, config_.truncation, topics);
  const ProbeConfig pc{config_.probe_epochs, config_.probe_lr, config_.probe_batch,
                       mix_seed(config_.seed, 0x70726f6265ULL), config_.clip_norm};
  const auto cache = path("cache");
  std::filesystem::create_directories(path("reports"));
  KeyValues kv;

  const EnsembleBundle mgt_bundle = EnsembleBundle::load(path("mgt/mgt.bundle"));
  const EnsembleBundle vanilla = EnsembleBundle::load(path("baseline/vanilla.bundle"));
  const DualEncoder baseline = load_checkpoint(path("baseline/best.ckpt"));
  std::vector<const DualEncoder*> levels, vanilla_members;
  for (const auto& m : mgt_bundle.members()) {
    levels.push_back(&m);
  }
  for (const auto& m : vanilla.members()) {
    vanilla_members.push_back(&m);
  }

  const SweepResult sweep = granularity_sweep(levels, suite, pc, options.probe_tasks, cache);
  for (const auto* row : {&sweep.bow, &sweep.abstract}) {
    for (const auto& r : *row) {
      put_probe(kv, "probe.sweep." + level_name(*r.level), r);
    }
  }
  if (sweep.rho_bow) {
    kv["probe.sweep.rho_bow"] = format_metric(*sweep.rho_bow);
  }
  if (sweep.rho_abstract) {
    kv["probe.sweep.rho_abstract"] = format_metric(*sweep.rho_abstract);
  }

  for (ProbeKind kind : options.probe_tasks) {
    put_probe(kv, "probe.transfer.baseline", probe_models({&baseline}, suite, kind, pc, cache));
    put_probe(kv, "probe.transfer.vanilla", probe_models(vanilla_members, suite, kind, pc, cache));
    put_probe(kv, "probe.transfer.mgt", probe_models(levels, suite, kind, pc, cache));
    if (options.finetune) {
      ProbeConfig fc = pc;
      fc.epochs = config_.finetune_epochs;
      fc.lr = config_.finetune_lr;
      DualEncoder tuned = baseline;
      put_probe(kv, "probe.finetune.baseline", finetune_probe(tuned, suite, kind, fc));
      DualEncoder fresh = init_dual_encoder(vocab.size(), config_.emb_dim, config_.hidden,
                                            mix_seed(config_.seed, 0x72616e64ULL), vocab.hash());
      put_probe(kv, "probe.finetune.random", finetune_probe(fresh, suite, kind, fc));
    }
  }
  write_text(path("reports/probe_metrics.txt"), format_key_values(kv));
  return {"reports/probe_metrics.txt"};
}

std::vector<std::string> Pipeline::report() {
  KeyValues merged;
  for (const char* rel : {"baseline/metrics.txt", "mgt/metrics.txt", "buckets/similarity.txt",
                          "reports/eval_metrics.txt", "reports/probe_metrics.txt"}) {
    for (auto& [k, v] : load_key_values(path(rel))) {
      merged[k] = v;
    }
  }
  const std::uint64_t boot_seed = mix_seed(config_.seed, 0x626f6f74ULL);
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"mgt", "baseline"}, {"mgt", "vanilla"}, {"vanilla", "baseline"}};
  for (const auto& [a, b] : pairs) {
    const auto pa = path("reports/ranks_" + a + ".txt");
    const auto pb = path("reports/ranks_" + b + ".txt");
    if (!std::filesystem::exists(pa) || !std::filesystem::exists(pb)) {
      continue;
    }
    const double p = paired_significance(read_ranks(pa), read_ranks(pb),
                                         config_.bootstrap_iterations, boot_seed);
    merged["significance." + a + "_vs_" + b + ".p"] = format_metric(p);
  }
  write_text(path("reports/metrics.txt"), format_key_values(merged));
  write_text(path("reports/summary.txt"), render_summary(merged, config_));
  return {"reports/metrics.txt", "reports/summary.txt"};
}

}  // namespace mgt
