#include "mgt/report.hpp"

#include <algorithm>
#include <cstdio>

namespace mgt {

namespace {

std::string get(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? "-" : it->second;
}

bool has(const KeyValues& kv, const std::string& key) { return kv.count(key) > 0; }

}  // namespace

std::string format_metric(double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

void TextTable::add_row(std::vector<std::string> cells) {
  cells.resize(headers_.size());
  rows_.push_back(std::move(cells));
}

std::string TextTable::render() const {
  std::vector<std::size_t> width(headers_.size());
  for (std::size_t c = 0; c < headers_.size(); ++c) {
    width[c] = headers_[c].size();
    for (const auto& r : rows_) {
      width[c] = std::max(width[c], r[c].size());
    }
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c > 0) {
        out += "  ";
      }
      out += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    while (!out.empty() && out.back() == ' ') {
      out.pop_back();
    }
    return out + "\n";
  };
  std::string out = line(headers_);
  std::size_t total = 0;
  for (std::size_t w : width) {
    total += w;
  }
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows_) {
    out += line(r);
  }
  return out;
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) {
    out += k + " = " + v + "\n";
  }
  return out;
}

std::string render_summary(const KeyValues& m, const Config& config) {
  const int levels = config.levels;
  std::string out;
  out += "Multi-granularity retrieval run\n";
  out += "seed " + std::to_string(config.seed) + ", k=" + std::to_string(config.k) +
         ", L=" + std::to_string(levels) + ", emb " + std::to_string(config.emb_dim) +
         ", hidden " + std::to_string(config.hidden) + ", epochs " +
         std::to_string(config.epochs) + "\n\n";

  // Retrieval
  std::vector<std::string> metric_keys{"mrr", "hits_at_1"};
  std::vector<std::string> headers{"model", "MRR", "Hits@1"};
  for (auto [n, k] : std::vector<std::pair<int, int>>{{2, 1}, {5, 1}, {10, 1}, {10, 2}, {10, 5}}) {
    const std::string key = "r" + std::to_string(n) + "_at_" + std::to_string(k);
    if (has(m, "retrieval.baseline." + key)) {
      metric_keys.push_back(key);
      headers.push_back("R" + std::to_string(n) + "@" + std::to_string(k));
    }
  }
  TextTable retrieval(headers);
  auto add = [&](const std::string& label, const std::string& name) {
    if (!has(m, "retrieval." + name + ".mrr")) {
      return;
    }
    std::vector<std::string> row{label};
    for (const auto& k : metric_keys) {
      row.push_back(get(m, "retrieval." + name + "." + k));
    }
    retrieval.add_row(row);
  };
  add("dual encoder (baseline)", "baseline");
  add("vanilla ensemble (" + get(m, "retrieval.vanilla.members") + ")", "vanilla");
  add("multi-granularity (" + get(m, "retrieval.mgt.members") + ")", "mgt");
  for (int l = 1; l <= levels; ++l) {
    add("  level " + std::to_string(l) + " alone", "level_" + std::to_string(l));
  }
  out += "Retrieval on the test split (" + get(m, "retrieval.baseline.count") + " examples)\n";
  out += retrieval.render();
  out += "\nPaired bootstrap on MRR (" + std::to_string(config.bootstrap_iterations) +
         " resamples)\n";
  TextTable sig({"comparison", "p"});
  for (const char* pair : {"mgt_vs_baseline", "mgt_vs_vanilla", "vanilla_vs_baseline"}) {
    const std::string key = std::string("significance.") + pair + ".p";
    if (has(m, key)) {
      std::string label = pair;
      std::replace(label.begin(), label.end(), '_', ' ');
      sig.add_row({label, get(m, key)});
    }
  }
  out += sig.render();

  // Negative sampling
  out += "\nMean cosine(ground truth, negative) per training corpus\n";
  TextTable neg({"corpus", "mean cosine"});
  neg.add_row({"uniform", get(m, "negatives.baseline.mean_cosine")});
  for (int l = 1; l <= levels; ++l) {
    neg.add_row({"level " + std::to_string(l), get(m, "negatives.level_" + std::to_string(l) +
                                                       ".mean_cosine")});
  }
  out += neg.render();

  // Granularity probes
  out += "\nFrozen probes per granularity level (micro-F1, test split)\n";
  TextTable sweep({"level", "BoW F1", "topic F1"});
  for (int l = 1; l <= levels; ++l) {
    const std::string p = "probe.sweep.level_" + std::to_string(l);
    sweep.add_row({std::to_string(l) + (l == 1 ? " (most granular)" : l == levels ? " (most abstract)" : ""),
                   get(m, p + ".bow.f1"), get(m, p + ".abstract.f1")});
  }
  out += sweep.render();
  if (has(m, "probe.sweep.rho_bow") || has(m, "probe.sweep.rho_abstract")) {
    out += "Spearman(granularity, BoW F1) = " + get(m, "probe.sweep.rho_bow") + "\n";
    out += "Spearman(granularity, topic F1) = " + get(m, "probe.sweep.rho_abstract") + "\n";
  }

  // Transfer probes
  out += "\nTransfer probes (micro-F1, test split)\n";
  TextTable transfer({"representation", "BoW F1", "topic F1"});
  auto add_probe = [&](const std::string& label, const std::string& prefix) {
    if (has(m, prefix + ".bow.f1") || has(m, prefix + ".abstract.f1")) {
      transfer.add_row({label, get(m, prefix + ".bow.f1"), get(m, prefix + ".abstract.f1")});
    }
  };
  add_probe("dual encoder (frozen)", "probe.transfer.baseline");
  add_probe("vanilla ensemble concat (frozen)", "probe.transfer.vanilla");
  add_probe("multi-granularity concat (frozen)", "probe.transfer.mgt");
  add_probe("fine-tuned from dual encoder", "probe.finetune.baseline");
  add_probe("fine-tuned from random init", "probe.finetune.random");
  out += transfer.render();
  return out;
}

}  // namespace mgt
