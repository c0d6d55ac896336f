#include "mgt/sampling.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"
#include "mgt/tokenizer.hpp"

namespace mgt {

namespace {

constexpr const char* kPoolHeader = "#mgt-pool v1";
constexpr const char* kCorpusHeader = "#mgt-train-corpus v1";

std::uint64_t anchor_seed(std::uint64_t seed, int epoch, int anchor, int level) {
  return mix_seed(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(epoch)),
                           static_cast<std::uint64_t>(anchor)),
                  static_cast<std::uint64_t>(level));
}

std::string header_field(const std::string& header, const std::string& key) {
  std::istringstream in(header);
  std::string word;
  while (in >> word) {
    if (word.rfind(key + "=", 0) == 0) {
      return word.substr(key.size() + 1);
    }
  }
  return {};
}

std::vector<int> parse_ints(const std::string& text, const std::string& where) {
  std::vector<int> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    if (*p == ' ') {
      ++p;
      continue;
    }
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next != end && *next != ' ')) {
      throw ParseError(where + ": bad integer list '" + text + "'");
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

std::string join_ints(std::span<const int> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) {
      out.push_back(' ');
    }
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: vector lengths differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw DomainError("cosine_similarity of a zero vector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---- ResponsePool -------------------------------------------------------------

ResponsePool::ResponsePool(std::vector<std::vector<std::string>> responses, ag::Matrix embeddings,
                           std::uint64_t encoder_fingerprint)
    : responses_(std::move(responses)),
      embeddings_(std::move(embeddings)),
      fingerprint_(encoder_fingerprint) {
  if (static_cast<Eigen::Index>(responses_.size()) != embeddings_.rows()) {
    throw ContractError("response pool: " + std::to_string(responses_.size()) + " responses but " +
                        std::to_string(embeddings_.rows()) + " embedding rows");
  }
  if (embeddings_.cols() < 1) {
    throw ContractError("response pool: embeddings have no columns");
  }
  norms_.resize(responses_.size());
  for (Eigen::Index i = 0; i < embeddings_.rows(); ++i) {
    double n = embeddings_.row(i).norm();
    if (n == 0.0) {
      embeddings_.row(i).setZero();
      embeddings_(i, i % embeddings_.cols()) = 1e-9;
      n = 1e-9;
      ++perturbed_;
      spdlog::warn("response {} has a zero embedding; replaced by an epsilon basis vector", i);
    }
    norms_[static_cast<std::size_t>(i)] = n;
  }
}

std::vector<double> ResponsePool::similarities(int anchor) const {
  if (anchor < 0 || static_cast<std::size_t>(anchor) >= size()) {
    throw ContractError("anchor " + std::to_string(anchor) + " outside pool of " +
                        std::to_string(size()));
  }
  Eigen::VectorXd dots = embeddings_ * embeddings_.row(anchor).transpose();
  std::vector<double> sims(size());
  const double na = norms_[static_cast<std::size_t>(anchor)];
  for (std::size_t i = 0; i < sims.size(); ++i) {
    sims[i] = std::clamp(dots(static_cast<Eigen::Index>(i)) / (norms_[i] * na), -1.0, 1.0);
  }
  return sims;
}

void ResponsePool::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write pool " + path.string());
  }
  out << kPoolHeader << " count=" << size() << " dim=" << dim()
      << " fingerprint=" << to_hex(fingerprint_) << "\n";
  char buf[32];
  for (std::size_t i = 0; i < size(); ++i) {
    out << join_tokens(responses_[i]) << '\t';
    for (Eigen::Index j = 0; j < embeddings_.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", embeddings_(static_cast<Eigen::Index>(i), j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
}

ResponsePool ResponsePool::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open pool " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line.rfind(kPoolHeader, 0) != 0) {
    throw ParseError(path.string() + ":1: not a pool file");
  }
  const std::size_t count = std::stoul(header_field(line, "count"));
  const int dim = std::stoi(header_field(line, "dim"));
  const std::uint64_t fp = from_hex(header_field(line, "fingerprint"));
  std::vector<std::vector<std::string>> responses;
  ag::Matrix emb(static_cast<Eigen::Index>(count), dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos || responses.size() >= count) {
      throw ParseError(where + ": malformed pool record");
    }
    responses.push_back(tokenize(line.substr(0, tab)));
    std::istringstream values(line.substr(tab + 1));
    const auto row = static_cast<Eigen::Index>(responses.size() - 1);
    for (int j = 0; j < dim; ++j) {
      if (!(values >> emb(row, j))) {
        throw ParseError(where + ": expected " + std::to_string(dim) + " embedding values");
      }
    }
  }
  if (responses.size() != count) {
    throw ParseError(path.string() + ":" + std::to_string(line_no + 1) + ": expected " +
                     std::to_string(count) + " pool records, found " +
                     std::to_string(responses.size()));
  }
  return ResponsePool(std::move(responses), std::move(emb), fp);
}

ResponsePool build_pool(const Split& train, const Vocabulary& vocab, const DualEncoder& encoder) {
  if (encoder.vocab_hash != vocab.hash()) {
    throw IntegrityError("pool encoder was trained with a different vocabulary");
  }
  std::vector<std::vector<std::string>> texts;
  std::vector<TokenIds> ids;
  texts.reserve(train.size());
  ids.reserve(train.size());
  for (const auto& ex : train.examples) {
    texts.push_back(ex.response);
    ids.push_back(response_ids(ex, vocab));
  }
  ag::Matrix emb = encode_all(encoder.response, ids);
  return ResponsePool(std::move(texts), std::move(emb), fingerprint(encoder));
}

// ---- BucketIndex --------------------------------------------------------------

BucketIndex::BucketIndex(int anchor, int levels, std::vector<int> ranked,
                         std::vector<double> similarity)
    : anchor_(anchor), levels_(levels), ranked_(std::move(ranked)), similarity_(std::move(similarity)) {
  const std::size_t n = ranked_.size();
  bounds_.resize(static_cast<std::size_t>(levels_) + 1);
  for (int l = 0; l <= levels_; ++l) {
    bounds_[static_cast<std::size_t>(l)] =
        n * static_cast<std::size_t>(l) / static_cast<std::size_t>(levels_);
  }
}

std::span<const int> BucketIndex::segment(int level) const {
  if (level < 1 || level > levels_) {
    throw ContractError("segment level " + std::to_string(level) + " outside [1, " +
                        std::to_string(levels_) + "]");
  }
  const std::size_t b = bounds_[static_cast<std::size_t>(level - 1)];
  const std::size_t e = bounds_[static_cast<std::size_t>(level)];
  return std::span<const int>(ranked_).subspan(b, e - b);
}

BucketIndex build_bucket_index(const ResponsePool& pool, int anchor, int levels) {
  if (levels < 1) {
    throw ConfigError("number of granularity levels must be >= 1, got " + std::to_string(levels));
  }
  if (pool.size() <= static_cast<std::size_t>(levels)) {
    throw ConfigError("pool of " + std::to_string(pool.size()) + " responses cannot be split into " +
                      std::to_string(levels) + " non-empty segments");
  }
  std::vector<double> sims = pool.similarities(anchor);
  std::vector<int> ranked;
  ranked.reserve(pool.size() - 1);
  for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
    if (i != anchor) {
      ranked.push_back(i);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double sa = sims[static_cast<std::size_t>(a)];
    const double sb = sims[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  return BucketIndex(anchor, levels, std::move(ranked), std::move(sims));
}

// ---- sampling -----------------------------------------------------------------

std::vector<int> sample_negatives(const BucketIndex* index, std::optional<int> level,
                                  std::size_t pool_size, int anchor, int k, Rng& rng,
                                  std::span<const int> exclusions) {
  if (k < 2) {
    throw ContractError("sample_negatives: k must be >= 2, got " + std::to_string(k));
  }
  if (index != nullptr && !level) {
    throw ContractError("sample_negatives: bucket index given without a level");
  }
  auto excluded = [&](int i) {
    return i == anchor || std::find(exclusions.begin(), exclusions.end(), i) != exclusions.end();
  };
  std::vector<int> eligible;
  if (index != nullptr) {
    for (int i : index->segment(*level)) {
      if (!excluded(i)) {
        eligible.push_back(i);
      }
    }
  } else {
    eligible.reserve(pool_size);
    for (int i = 0; i < static_cast<int>(pool_size); ++i) {
      if (!excluded(i)) {
        eligible.push_back(i);
      }
    }
  }
  if (eligible.empty()) {
    throw SamplingError("no eligible negatives for anchor " + std::to_string(anchor) +
                        (level ? " at level " + std::to_string(*level) : std::string()));
  }
  const std::size_t want = static_cast<std::size_t>(k - 1);
  const std::size_t take = std::min(want, eligible.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  std::vector<int> out(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take));
  if (take < want) {
    spdlog::warn("anchor {}: only {} eligible negatives for k-1={}, filling with replacement",
                 anchor, eligible.size(), want);
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    while (out.size() < want) {
      out.push_back(eligible[pick(rng)]);
    }
  }
  return out;
}

std::vector<std::vector<int>> duplicate_groups(const std::vector<std::vector<std::string>>& responses) {
  std::map<std::vector<std::string>, std::vector<int>> by_text;
  for (int i = 0; i < static_cast<int>(responses.size()); ++i) {
    by_text[responses[static_cast<std::size_t>(i)]].push_back(i);
  }
  std::vector<std::vector<int>> dups(responses.size());
  for (const auto& [text, members] : by_text) {
    if (members.size() < 2) {
      continue;
    }
    for (int i : members) {
      for (int j : members) {
        if (i != j) {
          dups[static_cast<std::size_t>(i)].push_back(j);
        }
      }
    }
  }
  return dups;
}

CorporaSet build_corpora(const Split& train, const Vocabulary& vocab, const ResponsePool& pool,
                         std::uint64_t checkpoint_fingerprint, const CorpusBuildOptions& options) {
  if (pool.encoder_fingerprint() != checkpoint_fingerprint) {
    throw IntegrityError("pool was embedded by encoder " + to_hex(pool.encoder_fingerprint()) +
                         " but checkpoint fingerprint is " + to_hex(checkpoint_fingerprint));
  }
  if (pool.size() != train.size()) {
    throw ContractError("pool holds " + std::to_string(pool.size()) +
                        " responses; it must hold all " + std::to_string(train.size()) +
                        " training responses");
  }
  if (options.k < 2 || options.levels < 1) {
    throw ConfigError("build_corpora needs k >= 2 and L >= 1");
  }
  const auto dups = duplicate_groups(pool.responses());
  CorporaSet set;
  set.baseline = build_uniform_corpus(train, vocab, options);
  set.levels.resize(static_cast<std::size_t>(options.levels));
  for (int l = 1; l <= options.levels; ++l) {
    set.levels[static_cast<std::size_t>(l - 1)].level = l;
    set.levels[static_cast<std::size_t>(l - 1)].k = options.k;
  }
  for (int i = 0; i < static_cast<int>(train.size()); ++i) {
    const auto& ex = train.examples[static_cast<std::size_t>(i)];
    TrainingExample base;
    base.context = context_ids(ex, vocab, options.truncation);
    base.response = i;
    const auto& excl = dups[static_cast<std::size_t>(i)];
    const BucketIndex index = build_bucket_index(pool, i, options.levels);
    for (int l = 1; l <= options.levels; ++l) {
      Rng level_rng(anchor_seed(options.seed, options.epoch, i, l));
      TrainingExample e = base;
      e.level = l;
      e.negatives = sample_negatives(&index, l, pool.size(), i, options.k, level_rng, excl);
      set.levels[static_cast<std::size_t>(l - 1)].examples.push_back(std::move(e));
    }
  }
  return set;
}

TrainingCorpus build_uniform_corpus(const Split& train, const Vocabulary& vocab,
                                    const CorpusBuildOptions& options) {
  if (options.k < 2) {
    throw ConfigError("uniform corpus needs k >= 2");
  }
  std::vector<std::vector<std::string>> texts;
  texts.reserve(train.size());
  for (const auto& ex : train.examples) {
    texts.push_back(ex.response);
  }
  const auto dups = duplicate_groups(texts);
  TrainingCorpus corpus;
  corpus.level = 0;
  corpus.k = options.k;
  corpus.examples.reserve(train.size());
  for (int i = 0; i < static_cast<int>(train.size()); ++i) {
    TrainingExample ex;
    ex.context = context_ids(train.examples[static_cast<std::size_t>(i)], vocab, options.truncation);
    ex.response = i;
    Rng rng(anchor_seed(options.seed, options.epoch, i, 0));
    ex.negatives = sample_negatives(nullptr, std::nullopt, train.size(), i, options.k, rng,
                                    dups[static_cast<std::size_t>(i)]);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

void write_training_corpus(const TrainingCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write training corpus " + path.string());
  }
  out << kCorpusHeader << " level=" << corpus.level << " k=" << corpus.k
      << " count=" << corpus.examples.size() << "\n";
  for (const auto& ex : corpus.examples) {
    out << "ctx=" << join_ints(ex.context) << "\tgt=" << ex.response
        << "\tneg=" << join_ints(ex.negatives) << "\tlevel=" << ex.level << "\n";
  }
}

TrainingCorpus load_training_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open training corpus " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw EmptyCorpusError(path.string() + ": empty training corpus");
  }
  if (line.rfind(kCorpusHeader, 0) != 0) {
    throw ParseError(path.string() + ":1: not a training corpus");
  }
  TrainingCorpus corpus;
  corpus.level = std::stoi(header_field(line, "level"));
  corpus.k = std::stoi(header_field(line, "k"));
  const std::size_t count = std::stoul(header_field(line, "count"));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    TrainingExample ex;
    int seen = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto tab = line.find('\t', start);
      const std::string field = line.substr(start, tab - start);
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw ParseError(where + ": field without tag");
      }
      const std::string tag = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (tag == "ctx") {
        ex.context = parse_ints(value, where);
      } else if (tag == "gt") {
        ex.response = parse_ints(value, where).at(0);
      } else if (tag == "neg") {
        ex.negatives = parse_ints(value, where);
      } else if (tag == "level") {
        ex.level = parse_ints(value, where).at(0);
      } else {
        throw ParseError(where + ": unknown field tag '" + tag + "'");
      }
      ++seen;
      if (tab == std::string::npos) {
        break;
      }
      start = tab + 1;
    }
    if (seen != 4 || ex.context.empty()) {
      throw ParseError(where + ": expected ctx, gt, neg and level fields");
    }
    if (static_cast<int>(ex.negatives.size()) != corpus.k - 1) {
      throw ParseError(where + ": expected " + std::to_string(corpus.k - 1) + " negatives, found " +
                       std::to_string(ex.negatives.size()));
    }
    corpus.examples.push_back(std::move(ex));
  }
  if (corpus.examples.size() != count) {
    throw ParseError(path.string() + ":" + std::to_string(line_no + 1) + ": expected " +
                     std::to_string(count) + " records, found " +
                     std::to_string(corpus.examples.size()));
  }
  if (corpus.examples.empty()) {
    throw EmptyCorpusError(path.string() + ": training corpus has no records");
  }
  return corpus;
}

double mean_negative_similarity(const TrainingCorpus& corpus, const ResponsePool& pool) {
  double total = 0.0;
  std::size_t n = 0;
  const ag::Matrix& e = pool.embeddings();
  for (const auto& ex : corpus.examples) {
    const auto gt = e.row(ex.response);
    for (int neg : ex.negatives) {
      const auto r = e.row(neg);
      total += gt.dot(r) / (gt.norm() * r.norm());
      ++n;
    }
  }
  if (n == 0) {
    throw ContractError("mean_negative_similarity of an empty corpus");
  }
  return total / static_cast<double>(n);
}

std::string describe_levels(const Split& train, const CorporaSet& corpora, std::size_t example) {
  const auto& ex = train.examples.at(example);
  std::ostringstream out;
  out << "dialog " << ex.id << "\n";
  for (const auto& turn : ex.context) {
    out << (turn.speaker == Speaker::user ? "  USER: " : "  SYS:  ") << join_tokens(turn.tokens)
        << "\n";
  }
  out << "ground truth: " << join_tokens(ex.response) << "\n";
  for (const auto& corpus : corpora.levels) {
    const auto& negs = corpus.examples.at(example).negatives;
    out << "level " << corpus.level << " negative: "
        << join_tokens(train.examples.at(static_cast<std::size_t>(negs.at(0))).response) << "\n";
  }
  return out.str();
}

}  // namespace mgt
