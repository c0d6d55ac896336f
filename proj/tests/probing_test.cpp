#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mgt/corpus.hpp"
#include "mgt/errors.hpp"
#include "mgt/metrics.hpp"
#include "mgt/probing.hpp"
#include "mgt/synthetic.hpp"

namespace ag = mgt::ag;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mgt_probing_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Two labels, each a linear threshold of the features; a third label that
// never fires in training.
void separable(std::mt19937_64& rng, std::size_t n, ag::Matrix& x, ag::Matrix& y) {
  std::normal_distribution<double> d;
  x.resize(static_cast<Eigen::Index>(n), 4);
  y = ag::Matrix::Zero(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < 4; ++j) {
      x(i, j) = d(rng);
    }
    // Margin keeps the classes cleanly apart.
    if (std::abs(x(i, 0)) < 0.2) {
      x(i, 0) += x(i, 0) < 0 ? -0.2 : 0.2;
    }
    if (std::abs(x(i, 1) - x(i, 2)) < 0.2) {
      x(i, 1) += 0.4;
    }
    y(i, 0) = x(i, 0) > 0;
    y(i, 1) = x(i, 1) > x(i, 2);
  }
}

struct Small {
  mgt::SyntheticCorpus data;
  mgt::Vocabulary vocab;
  mgt::ProbeSuite suite;
};

const Small& small() {
  static const Small s = [] {
    Small s;
    s.data = mgt::generate_synthetic_corpus(mgt::default_generator_spec(), {120, 40, 40}, 5, 2);
    s.vocab = mgt::build_vocab(s.data.train, 1000);
    s.suite = mgt::make_probe_suite(s.data.train, s.data.valid, s.data.test, s.vocab, 60,
                                    static_cast<int>(s.data.topic_names.size()));
    return s;
  }();
  return s;
}

}  // namespace

TEST(Probing, KindNames) {
  EXPECT_EQ(mgt::parse_probe_kind("bow"), mgt::ProbeKind::bag_of_words);
  EXPECT_EQ(mgt::parse_probe_kind("abstract_label"), mgt::ProbeKind::abstract_label);
  EXPECT_THROW(mgt::parse_probe_kind("dialog_act"), mgt::ConfigError);
}

TEST(Probing, MicroF1HandExample) {
  ag::Matrix pred(3, 2), truth(3, 2);
  pred << 1, 0, 1, 1, 0, 1;
  truth << 1, 1, 0, 1, 0, 0;
  // tp = 2, fp = 2, fn = 1 -> P = 0.5, R = 2/3, F1 = 4/7.
  auto s = mgt::micro_f1(pred, truth);
  EXPECT_NEAR(s.precision, 0.5, 1e-12);
  EXPECT_NEAR(s.recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.f1, 4.0 / 7.0, 1e-12);
  EXPECT_NEAR(s.label_recall[1], 0.5, 1e-12);
  std::vector<int> skip_second{1};
  auto first_only = mgt::micro_f1(pred, truth, skip_second);
  EXPECT_NEAR(first_only.precision, 0.5, 1e-12);
  EXPECT_NEAR(first_only.recall, 1.0, 1e-12);
  EXPECT_THROW(mgt::micro_f1(pred, ag::Matrix::Zero(2, 2)), mgt::DimensionError);
}

TEST(Probing, SeparableDataIsLearned) {
  std::mt19937_64 rng(4);
  mgt::ProbeData d;
  separable(rng, 600, d.train_x, d.train_y);
  separable(rng, 200, d.valid_x, d.valid_y);
  separable(rng, 200, d.test_x, d.test_y);
  mgt::ProbeConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.05;
  mgt::LinearProbe probe;
  auto r = mgt::train_probe(d, mgt::ProbeKind::bag_of_words, cfg, &probe);
  EXPECT_GT(r.test.f1, 0.99);
  EXPECT_EQ(r.excluded_labels, (std::vector<int>{2}));
  EXPECT_EQ(probe.weight.value.rows(), 4);
  EXPECT_EQ(probe.weight.value.cols(), 3);
  auto again = mgt::train_probe(d, mgt::ProbeKind::bag_of_words, cfg);
  EXPECT_EQ(again.test.f1, r.test.f1);
}

TEST(Probing, RandomFeaturesScoreAtChance) {
  // Predictions independent of the truth: precision is the positive rate q of
  // the targets and recall the positive rate p of the predictions.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> feature;
  std::bernoulli_distribution coin(0.5);
  auto fill = [&](std::size_t n, ag::Matrix& x, ag::Matrix& y) {
    x.resize(static_cast<Eigen::Index>(n), 6);
    y.resize(static_cast<Eigen::Index>(n), 4);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (int j = 0; j < 6; ++j) {
        x(i, j) = feature(rng);
      }
      for (int j = 0; j < 4; ++j) {
        y(i, j) = coin(rng);
      }
    }
  };
  mgt::ProbeData d;
  fill(800, d.train_x, d.train_y);
  fill(400, d.valid_x, d.valid_y);
  fill(4000, d.test_x, d.test_y);
  mgt::ProbeConfig cfg;
  cfg.epochs = 20;
  mgt::LinearProbe probe;
  auto r = mgt::train_probe(d, mgt::ProbeKind::bag_of_words, cfg, &probe);
  const ag::Matrix pred = probe.predict(d.test_x);
  const double p = pred.mean();
  const double q = d.test_y.mean();
  const double chance = 2 * p * q / (p + q);
  EXPECT_NEAR(r.test.f1, chance, 0.03) << "p=" << p << " q=" << q;
}

TEST(Probing, ProbeContracts) {
  mgt::ProbeData d;
  d.train_x = ag::Matrix::Ones(4, 2);
  d.train_y = ag::Matrix::Zero(3, 1);
  d.valid_x = d.test_x = ag::Matrix::Ones(4, 2);
  d.valid_y = d.test_y = ag::Matrix::Zero(4, 1);
  EXPECT_THROW(mgt::train_probe(d, mgt::ProbeKind::abstract_label, {}), mgt::DimensionError);
  d.train_y = ag::Matrix::Zero(4, 0);
  EXPECT_THROW(mgt::train_probe(d, mgt::ProbeKind::abstract_label, {}), mgt::ConfigError);
}

TEST(Probing, BagOfWordsTargetsFollowLastUserTurn) {
  const auto& s = small();
  auto task = mgt::make_probe_task(mgt::ProbeKind::bag_of_words, s.data.test, s.vocab,
                                   static_cast<int>(s.data.topic_names.size()));
  EXPECT_EQ(task.label_dim, s.vocab.content_size());
  for (std::size_t i = 0; i < s.data.test.size(); ++i) {
    std::set<int> ids;
    for (const auto& t : mgt::last_user_turn(s.data.test.examples[i])->tokens) {
      const int id = s.vocab.id(t);
      if (!s.vocab.is_reserved(id)) {
        ids.insert(id - mgt::Vocabulary::reserved_count);
      }
    }
    for (int j = 0; j < task.label_dim; ++j) {
      EXPECT_EQ(task.targets(static_cast<Eigen::Index>(i), j), ids.count(j) ? 1.0 : 0.0);
    }
  }
}

TEST(Probing, AbstractTargetsAreOneHotTopics) {
  const auto& s = small();
  const auto& task = s.suite.test.abstract;
  EXPECT_EQ(task.label_dim, 10);
  for (std::size_t i = 0; i < s.data.test.size(); ++i) {
    EXPECT_EQ(task.targets.row(static_cast<Eigen::Index>(i)).sum(), 1.0);
    EXPECT_EQ(task.targets(static_cast<Eigen::Index>(i), *s.data.test.examples[i].topic), 1.0);
  }
  auto no_topic = s.data.test;
  no_topic.examples[3].topic.reset();
  EXPECT_THROW(mgt::make_probe_task(mgt::ProbeKind::abstract_label, no_topic, s.vocab, 10),
               mgt::ConfigError);
}

TEST(Probing, FrozenFeaturesAndCache) {
  const auto& s = small();
  auto model = mgt::init_dual_encoder(s.vocab.size(), 5, 6, 3, s.vocab.hash());
  auto plain = mgt::freeze_and_encode(model, s.suite.valid.contexts);
  EXPECT_TRUE(plain.isApprox(mgt::encode_all(model.context, s.suite.valid.contexts), 1e-14));

  auto dir = temp_dir("cache");
  bool hit = true;
  auto first = mgt::freeze_and_encode(model, s.suite.valid.contexts, dir, &hit);
  EXPECT_FALSE(hit);
  auto second = mgt::freeze_and_encode(model, s.suite.valid.contexts, dir, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(first, second);

  ASSERT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 1);
  const fs::path file = fs::directory_iterator(dir)->path();
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-12, std::ios::end);
    f.put('\x7f');
  }
  EXPECT_THROW(mgt::freeze_and_encode(model, s.suite.valid.contexts, dir), mgt::IntegrityError);
}

TEST(Probing, SweepReportsSpearmanPerTask) {
  const auto& s = small();
  std::vector<mgt::DualEncoder> models;
  for (int l = 1; l <= 3; ++l) {
    models.push_back(mgt::init_dual_encoder(s.vocab.size(), 5, 6, static_cast<std::uint64_t>(l), s.vocab.hash()));
  }
  std::vector<const mgt::DualEncoder*> ptrs{&models[0], &models[1], &models[2]};
  mgt::ProbeConfig cfg;
  cfg.epochs = 3;
  auto sweep = mgt::granularity_sweep(ptrs, s.suite, cfg);
  ASSERT_EQ(sweep.bow.size(), 3u);
  ASSERT_EQ(sweep.abstract.size(), 3u);
  ASSERT_TRUE(sweep.rho_bow.has_value());
  std::vector<double> granularity{3, 2, 1}, f1;
  for (const auto& r : sweep.bow) {
    f1.push_back(r.test.f1);
  }
  const double expected = mgt::spearman(granularity, f1);
  if (std::isnan(expected)) {
    EXPECT_TRUE(std::isnan(*sweep.rho_bow));
  } else {
    EXPECT_DOUBLE_EQ(*sweep.rho_bow, expected);
  }

  auto only_bow = mgt::granularity_sweep({ptrs[0]}, s.suite, cfg, {mgt::ProbeKind::bag_of_words});
  EXPECT_EQ(only_bow.bow.size(), 1u);
  EXPECT_TRUE(only_bow.abstract.empty());
  EXPECT_FALSE(only_bow.rho_bow.has_value());
}

TEST(Probing, ConcatenationWidensFeatures) {
  const auto& s = small();
  auto a = mgt::init_dual_encoder(s.vocab.size(), 5, 6, 1, s.vocab.hash());
  auto b = mgt::init_dual_encoder(s.vocab.size(), 5, 6, 2, s.vocab.hash());
  mgt::ProbeConfig cfg;
  cfg.epochs = 2;
  const auto before_a = mgt::fingerprint(a);
  const auto before_b = mgt::fingerprint(b);
  auto r = mgt::probe_models({&a, &b}, s.suite, mgt::ProbeKind::abstract_label, cfg);
  EXPECT_EQ(mgt::fingerprint(a), before_a);
  EXPECT_EQ(mgt::fingerprint(b), before_b);
  EXPECT_GE(r.test.f1, 0.0);
  EXPECT_LE(r.test.f1, 1.0);
}

TEST(Probing, FinetuneChangesContextEncoderOnly) {
  const auto& s = small();
  auto model = mgt::init_dual_encoder(s.vocab.size(), 5, 6, 1, s.vocab.hash());
  const ag::Matrix response_before = model.response.w_hh.value;
  const ag::Matrix context_before = model.context.w_hh.value;
  mgt::ProbeConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 0.01;
  auto r = mgt::finetune_probe(model, s.suite, mgt::ProbeKind::abstract_label, cfg);
  EXPECT_EQ(model.response.w_hh.value, response_before);
  EXPECT_NE(model.context.w_hh.value, context_before);
  EXPECT_GE(r.test.f1, 0.0);
  EXPECT_LE(r.test.f1, 1.0);
}
