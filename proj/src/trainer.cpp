#include "mgt/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <unordered_map>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"

namespace mgt {

EvalSet make_eval_set(const Split& split, const Vocabulary& vocab, int truncation) {
  validate_split(split, true);
  EvalSet set;
  set.contexts.reserve(split.size());
  set.responses.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& ex = split.examples[i];
    set.contexts.push_back(context_ids(ex, vocab, truncation));
    set.responses.push_back(response_ids(ex, vocab));
    set.candidates.push_back(ex.candidates);
    set.truth.push_back(split.truth_position(i));
  }
  return set;
}

std::vector<std::vector<double>> candidate_logits(const DualEncoder& model, const EvalSet& set) {
  const ag::Matrix c = encode_all(model.context, set.contexts);
  const ag::Matrix r = encode_all(model.response, set.responses);
  std::vector<std::vector<double>> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& cands = set.candidates[i];
    out[i].resize(cands.size());
    for (std::size_t j = 0; j < cands.size(); ++j) {
      out[i][j] = c.row(static_cast<Eigen::Index>(i)).dot(r.row(cands[j]));
    }
  }
  return out;
}

EvalReport evaluate_model(const DualEncoder& model, const EvalSet& set,
                          const std::vector<std::pair<int, int>>& r_specs) {
  return evaluate_scores(candidate_logits(model, set), set.truth, r_specs);
}

double batch_loss_backward(DualEncoder& model, const TrainingCorpus& corpus,
                           std::span<const std::size_t> batch,
                           const std::vector<TokenIds>& pool_responses) {
  if (batch.empty()) {
    throw ContractError("empty training batch");
  }
  std::vector<TokenIds> contexts;
  std::vector<TokenIds> responses;
  std::unordered_map<int, int> row_of;
  std::vector<std::vector<int>> rows(batch.size());
  contexts.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingExample& ex = corpus.examples.at(batch[b]);
    if (static_cast<int>(ex.negatives.size()) != corpus.k - 1) {
      throw ContractError("training example " + std::to_string(batch[b]) + " has " +
                          std::to_string(ex.negatives.size()) + " negatives, expected " +
                          std::to_string(corpus.k - 1));
    }
    contexts.push_back(ex.context);
    auto row = [&](int pool_index) {
      auto [it, inserted] = row_of.emplace(pool_index, static_cast<int>(responses.size()));
      if (inserted) {
        responses.push_back(pool_responses.at(static_cast<std::size_t>(pool_index)));
      }
      return it->second;
    };
    rows[b].push_back(row(ex.response));
    for (int n : ex.negatives) {
      rows[b].push_back(row(n));
    }
  }

  ag::Tape tape;
  BoundEncoder ctx = bind(tape, model.context, true);
  BoundEncoder rsp = bind(tape, model.response, true);
  ag::Tensor c = encode_batch(ctx, contexts);
  ag::Tensor r = encode_batch(rsp, responses);
  std::vector<ag::Tensor> losses;
  losses.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ag::Tensor cands = ag::gather_rows(r, rows[b]);
    ag::Tensor logits = ag::matmul_nt(ag::slice_rows(c, static_cast<Eigen::Index>(b), 1), cands);
    losses.push_back(ag::softmax_cross_entropy(logits, 0));
  }
  ag::Tensor total = ag::mean(ag::concat_cols(losses));
  tape.backward(total);
  return total.item();
}

double example_loss(const DualEncoder& model, const TrainingExample& example,
                    const std::vector<TokenIds>& pool_responses) {
  std::vector<TokenIds> cands;
  cands.push_back(pool_responses.at(static_cast<std::size_t>(example.response)));
  for (int n : example.negatives) {
    cands.push_back(pool_responses.at(static_cast<std::size_t>(n)));
  }
  const auto logits = score_values(model, example.context, cands);
  const auto p = ag::softmax(logits);
  return -std::log(p[0]);
}

std::vector<std::size_t> TrainResult::top(std::size_t n) const {
  std::vector<std::size_t> idx(epochs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return epochs[a].valid_mrr > epochs[b].valid_mrr;
  });
  idx.resize(std::min(n, idx.size()));
  return idx;
}

TrainResult train(DualEncoder& model, const CorpusSchedule& schedule,
                  const std::vector<TokenIds>& pool_responses, const EvalSet& valid,
                  const Config& config, const std::filesystem::path& dir,
                  const std::string& prefix) {
  validate_config(config);
  std::filesystem::create_directories(dir);
  auto params = model.parameters();
  Adam adam(params, Adam::Options{config.lr, 0.9, 0.999, 1e-8});

  TrainResult result;
  result.untrained_valid_mrr = evaluate_model(model, valid).mrr;
  double best_mrr = -1.0;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const TrainingCorpus& corpus = schedule(epoch);
    if (corpus.examples.empty()) {
      throw EmptyCorpusError("training corpus for epoch " + std::to_string(epoch) + " is empty");
    }
    std::vector<std::size_t> order(corpus.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(mix_seed(config.seed, 0x5348554646ULL), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - begin);
      const std::span<const std::size_t> batch(order.data() + begin, count);
      model.zero_grad();
      double loss = 0.0;
      try {
        loss = batch_loss_backward(model, corpus, batch, pool_responses);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss");
        }
        clip_grad_norm(params, config.clip_norm);
        adam.step(params);
      } catch (const NumericError& e) {
        throw NumericError(prefix + ": training diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + " (examples " +
                           std::to_string(begin) + ".." + std::to_string(begin + count - 1) +
                           "): " + e.what());
      }
      loss_sum += loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.valid_mrr = evaluate_model(model, valid).mrr;
    char name[64];
    std::snprintf(name, sizeof(name), "_epoch_%02d.ckpt", epoch);
    rec.checkpoint = dir / (prefix + name);
    save_checkpoint(model, rec.checkpoint);
    rec.fingerprint = fingerprint(model);
    spdlog::info("{} epoch {}/{}: loss {:.5f} valid MRR {:.5f}", prefix, epoch, config.epochs,
                 rec.train_loss, rec.valid_mrr);
    if (rec.valid_mrr > best_mrr) {
      best_mrr = rec.valid_mrr;
      result.best = result.epochs.size();
      result.best_model = model;
    }
    result.epochs.push_back(rec);
  }
  return result;
}

std::vector<TokenIds> pool_token_ids(const Split& train, const Vocabulary& vocab) {
  std::vector<TokenIds> out;
  out.reserve(train.size());
  for (const auto& ex : train.examples) {
    out.push_back(response_ids(ex, vocab));
  }
  return out;
}

}  // namespace mgt
