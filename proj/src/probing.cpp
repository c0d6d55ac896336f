#include "mgt/probing.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"
#include "mgt/metrics.hpp"
#include "mgt/optimizer.hpp"

namespace mgt {

namespace {

constexpr const char* kFeatureHeader = "#mgt-features v1";

std::uint64_t contexts_hash(const std::vector<TokenIds>& contexts) {
  Fnv1a h;
  h.update_pod(static_cast<std::uint64_t>(contexts.size()));
  for (const auto& c : contexts) {
    h.update_pod(static_cast<std::uint64_t>(c.size()));
    h.update(std::as_bytes(std::span<const int>(c)));
  }
  return h.digest();
}

std::string header_value(const std::string& header, const std::string& key) {
  std::istringstream in(header);
  std::string word;
  while (in >> word) {
    if (word.rfind(key + "=", 0) == 0) {
      return word.substr(key.size() + 1);
    }
  }
  return {};
}

ag::Matrix read_feature_cache(const std::filesystem::path& path, std::uint64_t fp,
                              std::uint64_t ctx_hash, std::size_t rows, int cols) {
  std::ifstream in(path, std::ios::binary);
  std::string header;
  if (!in || !std::getline(in, header) || header.rfind(kFeatureHeader, 0) != 0) {
    throw IntegrityError("feature cache " + path.string() + " is unreadable");
  }
  if (from_hex(header_value(header, "fingerprint")) != fp ||
      from_hex(header_value(header, "contexts")) != ctx_hash) {
    throw IntegrityError("feature cache " + path.string() +
                         " was written for a different checkpoint or context set");
  }
  if (header_value(header, "rows") != std::to_string(rows) ||
      header_value(header, "cols") != std::to_string(cols)) {
    throw IntegrityError("feature cache " + path.string() + " has the wrong shape");
  }
  ag::Matrix m(static_cast<Eigen::Index>(rows), cols);
  const auto bytes = static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double)));
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  std::uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (!in || stored != hash_bytes(std::string_view(reinterpret_cast<const char*>(m.data()),
                                                   static_cast<std::size_t>(bytes)))) {
    throw IntegrityError("feature cache " + path.string() + " is truncated or corrupted");
  }
  return m;
}

void write_feature_cache(const std::filesystem::path& path, const ag::Matrix& m, std::uint64_t fp,
                         std::uint64_t ctx_hash) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << kFeatureHeader << " fingerprint=" << to_hex(fp) << " contexts=" << to_hex(ctx_hash)
        << " rows=" << m.rows() << " cols=" << m.cols() << "\n";
    const auto bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(bytes));
    const std::uint64_t sum =
        hash_bytes(std::string_view(reinterpret_cast<const char*>(m.data()), bytes));
    out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    if (!out) {
      throw IntegrityError("cannot write feature cache " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<int> zero_columns(const ag::Matrix& targets) {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    if (targets.col(j).sum() == 0.0) {
      out.push_back(static_cast<int>(j));
    }
  }
  return out;
}

ag::Matrix threshold(const ag::Matrix& logits) {
  // sigmoid(z) >= 0.5  <=>  z >= 0
  return (logits.array() >= 0.0).cast<double>().matrix();
}

ag::Matrix concat_features(const std::vector<ag::Matrix>& parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    cols += p.cols();
  }
  ag::Matrix out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

LinearProbe init_probe(int features, int labels) {
  return LinearProbe{ag::Parameter("probe.weight", ag::Matrix::Zero(features, labels)),
                     ag::Parameter("probe.bias", ag::Matrix::Zero(1, labels))};
}

std::string describe(const std::vector<const DualEncoder*>& models) {
  std::string out;
  for (const auto* m : models) {
    if (!out.empty()) {
      out += "+";
    }
    out += m->granularity_level ? "level" + std::to_string(*m->granularity_level) : "baseline";
  }
  return out;
}

}  // namespace

std::string to_string(ProbeKind kind) {
  return kind == ProbeKind::bag_of_words ? "bag_of_words" : "abstract_label";
}

ProbeKind parse_probe_kind(const std::string& text) {
  if (text == "bow" || text == "bag_of_words") {
    return ProbeKind::bag_of_words;
  }
  if (text == "abstract" || text == "abstract_label") {
    return ProbeKind::abstract_label;
  }
  throw ConfigError("probe task must be 'bow' or 'abstract', got '" + text + "'");
}

ProbeTask make_probe_task(ProbeKind kind, const Split& split, const Vocabulary& vocab,
                          int num_topics) {
  ProbeTask task;
  task.kind = kind;
  task.label_dim = kind == ProbeKind::bag_of_words ? vocab.content_size() : num_topics;
  if (task.label_dim <= 0) {
    throw ConfigError("probe task '" + to_string(kind) + "' has no labels");
  }
  task.targets = ag::Matrix::Zero(static_cast<Eigen::Index>(split.size()), task.label_dim);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& ex = split.examples[i];
    const auto row = static_cast<Eigen::Index>(i);
    if (kind == ProbeKind::bag_of_words) {
      const Turn* last = last_user_turn(ex);
      if (last == nullptr) {
        continue;
      }
      for (int id : vocab.encode(last->tokens)) {
        if (!vocab.is_reserved(id)) {
          task.targets(row, id - Vocabulary::reserved_count) = 1.0;
        }
      }
    } else {
      if (!ex.topic || *ex.topic < 0 || *ex.topic >= num_topics) {
        throw ConfigError("example " + ex.id + " has no topic label in [0, " +
                          std::to_string(num_topics) + ")");
      }
      task.targets(row, *ex.topic) = 1.0;
    }
  }
  return task;
}

ag::Matrix freeze_and_encode(const DualEncoder& model, const std::vector<TokenIds>& contexts,
                             const std::filesystem::path& cache_dir, bool* cache_hit) {
  if (cache_hit != nullptr) {
    *cache_hit = false;
  }
  if (cache_dir.empty()) {
    return encode_all(model.context, contexts);
  }
  const std::uint64_t fp = fingerprint(model);
  const std::uint64_t ctx = contexts_hash(contexts);
  const auto path = cache_dir / ("features-" + to_hex(fp) + "-" + to_hex(ctx) + ".bin");
  if (std::filesystem::exists(path)) {
    ag::Matrix m = read_feature_cache(path, fp, ctx, contexts.size(), model.hidden());
    spdlog::debug("feature cache hit: {}", path.filename().string());
    if (cache_hit != nullptr) {
      *cache_hit = true;
    }
    return m;
  }
  ag::Matrix m = encode_all(model.context, contexts);
  write_feature_cache(path, m, fp, ctx);
  spdlog::debug("feature cache miss, wrote {}", path.filename().string());
  return m;
}

F1Score micro_f1(const ag::Matrix& predictions, const ag::Matrix& targets,
                 std::span<const int> excluded) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw DimensionError("micro_f1: prediction and target shapes differ");
  }
  F1Score s;
  double tp = 0, fp = 0, fn = 0;
  s.label_precision.assign(static_cast<std::size_t>(targets.cols()), 0.0);
  s.label_recall.assign(static_cast<std::size_t>(targets.cols()), 0.0);
  for (Eigen::Index j = 0; j < targets.cols(); ++j) {
    double ltp = 0, lfp = 0, lfn = 0;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      const bool p = predictions(i, j) > 0.5;
      const bool t = targets(i, j) > 0.5;
      ltp += p && t;
      lfp += p && !t;
      lfn += !p && t;
    }
    s.label_precision[static_cast<std::size_t>(j)] = ltp + lfp > 0 ? ltp / (ltp + lfp) : 0.0;
    s.label_recall[static_cast<std::size_t>(j)] = ltp + lfn > 0 ? ltp / (ltp + lfn) : 0.0;
    if (std::find(excluded.begin(), excluded.end(), static_cast<int>(j)) == excluded.end()) {
      tp += ltp;
      fp += lfp;
      fn += lfn;
    }
  }
  s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

ag::Matrix LinearProbe::logits(const ag::Matrix& features) const {
  ag::Matrix z = features * weight.value;
  z.rowwise() += bias.value.row(0);
  return z;
}

ag::Matrix LinearProbe::predict(const ag::Matrix& features) const {
  return threshold(logits(features));
}

ProbeResult train_probe(const ProbeData& data, ProbeKind kind, const ProbeConfig& config,
                        LinearProbe* trained) {
  const auto n = data.train_x.rows();
  if (n == 0 || n != data.train_y.rows() || data.valid_x.rows() != data.valid_y.rows() ||
      data.test_x.rows() != data.test_y.rows()) {
    throw DimensionError("train_probe: feature rows do not match target rows");
  }
  const auto labels = data.train_y.cols();
  if (labels == 0) {
    throw ConfigError("train_probe: zero-dimension label set");
  }
  if (config.epochs < 1 || config.batch < 1 || !(config.lr > 0)) {
    throw ConfigError("train_probe: epochs, batch and lr must be positive");
  }
  ProbeResult result;
  result.kind = kind;
  result.excluded_labels = zero_columns(data.train_y);
  if (!result.excluded_labels.empty()) {
    spdlog::info("probe {}: {} of {} labels never occur in training and are excluded from F1",
                 to_string(kind), result.excluded_labels.size(), labels);
  }

  LinearProbe probe = init_probe(static_cast<int>(data.train_x.cols()), static_cast<int>(labels));
  std::vector<ag::Parameter*> params{&probe.weight, &probe.bias};
  Adam adam(params, Adam::Options{config.lr, 0.9, 0.999, 1e-8});
  LinearProbe best = probe;
  double best_f1 = -1.0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(config.seed, 0x70726f6265ULL));
  const auto batch = static_cast<Eigen::Index>(config.batch);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index begin = 0; begin < n; begin += batch) {
      const Eigen::Index count = std::min(batch, n - begin);
      ag::Matrix x(count, data.train_x.cols());
      ag::Matrix y(count, labels);
      for (Eigen::Index r = 0; r < count; ++r) {
        x.row(r) = data.train_x.row(order[static_cast<std::size_t>(begin + r)]);
        y.row(r) = data.train_y.row(order[static_cast<std::size_t>(begin + r)]);
      }
      probe.weight.zero_grad();
      probe.bias.zero_grad();
      ag::Tape tape;
      ag::Tensor z = ag::add_row(ag::matmul(tape.constant(std::move(x)), tape.parameter(probe.weight)),
                                 tape.parameter(probe.bias));
      ag::Tensor loss = ag::scale(ag::sigmoid_binary_cross_entropy(z, y), 1.0 / static_cast<double>(count));
      tape.backward(loss);
      clip_grad_norm(params, config.clip_norm);
      adam.step(params);
    }
    const double f1 =
        micro_f1(probe.predict(data.valid_x), data.valid_y, result.excluded_labels).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = probe;
      result.best_epoch = epoch;
    }
  }
  result.valid_f1 = best_f1;
  result.test = micro_f1(best.predict(data.test_x), data.test_y, result.excluded_labels);
  if (trained != nullptr) {
    *trained = best;
  }
  return result;
}

ProbeSuite make_probe_suite(const Split& train, const Split& valid, const Split& test,
                            const Vocabulary& vocab, int truncation, int num_topics) {
  auto make = [&](const Split& split) {
    ProbeSplit s;
    for (const auto& ex : split.examples) {
      s.contexts.push_back(context_ids(ex, vocab, truncation));
    }
    s.bow = make_probe_task(ProbeKind::bag_of_words, split, vocab, num_topics);
    s.abstract = make_probe_task(ProbeKind::abstract_label, split, vocab, num_topics);
    return s;
  };
  return ProbeSuite{make(train), make(valid), make(test)};
}

ProbeResult probe_models(const std::vector<const DualEncoder*>& models, const ProbeSuite& suite,
                         ProbeKind kind, const ProbeConfig& config,
                         const std::filesystem::path& cache_dir) {
  if (models.empty()) {
    throw ContractError("probe_models needs at least one model");
  }
  auto features = [&](const ProbeSplit& split) {
    std::vector<ag::Matrix> parts;
    for (const auto* m : models) {
      parts.push_back(freeze_and_encode(*m, split.contexts, cache_dir));
    }
    return parts.size() == 1 ? parts.front() : concat_features(parts);
  };
  ProbeData data{features(suite.train), suite.train.task(kind).targets,
                 features(suite.valid), suite.valid.task(kind).targets,
                 features(suite.test),  suite.test.task(kind).targets};
  ProbeResult r = train_probe(data, kind, config);
  r.model = describe(models);
  if (models.size() == 1) {
    r.level = models.front()->granularity_level;
  }
  return r;
}

SweepResult granularity_sweep(const std::vector<const DualEncoder*>& models,
                              const ProbeSuite& suite, const ProbeConfig& config,
                              const std::vector<ProbeKind>& kinds,
                              const std::filesystem::path& cache_dir) {
  SweepResult sweep;
  const int levels = static_cast<int>(models.size());
  std::vector<double> granularity;
  for (int l = 1; l <= levels; ++l) {
    granularity.push_back(static_cast<double>(levels + 1 - l));
  }
  for (ProbeKind kind : kinds) {
    auto& row = kind == ProbeKind::bag_of_words ? sweep.bow : sweep.abstract;
    std::vector<double> f1;
    for (int l = 1; l <= levels; ++l) {
      ProbeResult r = probe_models({models[static_cast<std::size_t>(l - 1)]}, suite, kind, config,
                                   cache_dir);
      r.level = l;
      f1.push_back(r.test.f1);
      row.push_back(std::move(r));
    }
    if (levels > 1) {
      (kind == ProbeKind::bag_of_words ? sweep.rho_bow : sweep.rho_abstract) =
          spearman(granularity, f1);
    }
  }
  return sweep;
}

ProbeResult finetune_probe(DualEncoder& model, const ProbeSuite& suite, ProbeKind kind,
                           const ProbeConfig& config) {
  const ProbeTask& train_task = suite.train.task(kind);
  const auto n = static_cast<Eigen::Index>(suite.train.contexts.size());
  if (n == 0 || train_task.targets.rows() != n) {
    throw DimensionError("finetune_probe: contexts and targets differ in count");
  }
  const auto labels = train_task.targets.cols();
  if (labels == 0) {
    throw ConfigError("finetune_probe: zero-dimension label set");
  }
  ProbeResult result;
  result.kind = kind;
  result.model = "finetuned";
  result.level = model.granularity_level;
  result.excluded_labels = zero_columns(train_task.targets);

  LinearProbe probe = init_probe(model.hidden(), static_cast<int>(labels));
  std::vector<ag::Parameter*> params = model.context.parameters();
  params.push_back(&probe.weight);
  params.push_back(&probe.bias);
  Adam adam(params, Adam::Options{config.lr, 0.9, 0.999, 1e-8});

  EncoderParams best_encoder = model.context;
  LinearProbe best_probe = probe;
  double best_f1 = -1.0;
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(config.seed, 0x66696e65ULL));
  const auto batch = static_cast<std::size_t>(config.batch);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t count = std::min(batch, order.size() - begin);
      std::vector<TokenIds> ctx;
      ag::Matrix y(static_cast<Eigen::Index>(count), labels);
      for (std::size_t r = 0; r < count; ++r) {
        ctx.push_back(suite.train.contexts[order[begin + r]]);
        y.row(static_cast<Eigen::Index>(r)) =
            train_task.targets.row(static_cast<Eigen::Index>(order[begin + r]));
      }
      for (auto* p : params) {
        p->zero_grad();
      }
      try {
        ag::Tape tape;
        BoundEncoder enc = bind(tape, model.context, true);
        ag::Tensor h = encode_batch(enc, ctx);
        ag::Tensor z = ag::add_row(ag::matmul(h, tape.parameter(probe.weight)),
                                   tape.parameter(probe.bias));
        ag::Tensor loss = ag::scale(ag::sigmoid_binary_cross_entropy(z, y),
                                    1.0 / static_cast<double>(count));
        tape.backward(loss);
        clip_grad_norm(params, config.clip_norm);
        adam.step(params);
      } catch (const NumericError& e) {
        throw NumericError("fine-tuning diverged at epoch " + std::to_string(epoch) +
                           ", examples " + std::to_string(begin) + ".." +
                           std::to_string(begin + count - 1) + ": " + e.what());
      }
    }
    const ag::Matrix valid_x = encode_all(model.context, suite.valid.contexts);
    const double f1 =
        micro_f1(probe.predict(valid_x), suite.valid.task(kind).targets, result.excluded_labels).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_encoder = model.context;
      best_probe = probe;
      result.best_epoch = epoch;
    }
  }
  model.context = best_encoder;
  result.valid_f1 = best_f1;
  const ag::Matrix test_x = encode_all(model.context, suite.test.contexts);
  result.test = micro_f1(best_probe.predict(test_x), suite.test.task(kind).targets,
                         result.excluded_labels);
  return result;
}

}  // namespace mgt
