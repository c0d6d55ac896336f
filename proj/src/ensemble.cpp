#include "mgt/ensemble.hpp"

#include <fstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"

namespace mgt {

std::string to_string(EnsembleMode mode) { return mode == EnsembleMode::mgt ? "mgt" : "vanilla"; }

EnsembleMode parse_ensemble_mode(const std::string& text) {
  if (text == "mgt") {
    return EnsembleMode::mgt;
  }
  if (text == "vanilla") {
    return EnsembleMode::vanilla;
  }
  throw ConfigError("ensemble mode must be 'mgt' or 'vanilla', got '" + text + "'");
}

std::vector<double> ensemble_average(const std::vector<std::vector<double>>& member_logits) {
  if (member_logits.empty()) {
    throw ContractError("ensemble needs at least one member");
  }
  const std::size_t k = member_logits.front().size();
  if (k < 2) {
    throw ContractError("ensemble needs at least 2 candidates");
  }
  std::vector<double> out(k, 0.0);
  for (const auto& logits : member_logits) {
    if (logits.size() != k) {
      throw DimensionError("ensemble members scored different candidate counts");
    }
    const auto p = ag::softmax(logits);
    for (std::size_t i = 0; i < k; ++i) {
      out[i] += p[i];
    }
  }
  for (double& v : out) {
    v /= static_cast<double>(member_logits.size());
  }
  return out;
}

EnsembleBundle::EnsembleBundle(EnsembleMode mode, std::vector<DualEncoder> members,
                               std::vector<std::filesystem::path> paths)
    : mode_(mode), members_(std::move(members)), paths_(std::move(paths)) {
  if (members_.empty()) {
    throw ContractError("ensemble bundle needs at least one member");
  }
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const auto& m = members_[i];
    if (m.vocab_hash != members_.front().vocab_hash) {
      throw IntegrityError("ensemble member " + std::to_string(i) +
                           " was trained on a different vocabulary");
    }
    if (m.hidden() != members_.front().hidden() || m.response.hidden != m.context.hidden) {
      throw IntegrityError("ensemble member " + std::to_string(i) + " has a different hidden size");
    }
    fingerprints_.push_back(fingerprint(m));
  }
}

EnsembleBundle EnsembleBundle::load(const std::filesystem::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open bundle manifest " + manifest.string());
  }
  std::string line;
  if (!std::getline(in, line) || line != "#mgt-bundle v1") {
    throw ParseError(manifest.string() + ":1: not a bundle manifest");
  }
  std::optional<EnsembleMode> mode;
  std::vector<DualEncoder> members;
  std::vector<std::filesystem::path> paths;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (line.rfind("mode=", 0) == 0) {
      mode = parse_ensemble_mode(line.substr(5));
    } else if (line.rfind("member=", 0) == 0) {
      const std::string rest = line.substr(7);
      const auto space = rest.rfind(' ');
      if (space == std::string::npos) {
        throw ParseError(where + ": expected 'member=<path> <fingerprint>'");
      }
      std::filesystem::path p = rest.substr(0, space);
      if (p.is_relative()) {
        p = manifest.parent_path() / p;
      }
      const std::uint64_t expected = from_hex(rest.substr(space + 1));
      DualEncoder m = load_checkpoint(p);
      if (fingerprint(m) != expected) {
        throw IntegrityError(where + ": checkpoint " + p.string() + " has fingerprint " +
                             to_hex(fingerprint(m)) + ", manifest records " + to_hex(expected));
      }
      members.push_back(std::move(m));
      paths.push_back(p);
    } else if (!line.empty()) {
      throw ParseError(where + ": unexpected line");
    }
  }
  if (!mode) {
    throw ParseError(manifest.string() + ": missing mode line");
  }
  return EnsembleBundle(*mode, std::move(members), std::move(paths));
}

void EnsembleBundle::save(const std::filesystem::path& manifest) const {
  if (paths_.size() != members_.size()) {
    throw ContractError("bundle members have no checkpoint paths to record");
  }
  std::ofstream out(manifest, std::ios::binary);
  if (!out) {
    throw IntegrityError("cannot write bundle manifest " + manifest.string());
  }
  out << "#mgt-bundle v1\nmode=" << to_string(mode_) << "\n";
  for (std::size_t i = 0; i < members_.size(); ++i) {
    std::filesystem::path p = paths_[i];
    if (p.parent_path() == manifest.parent_path()) {
      p = p.filename();
    }
    out << "member=" << p.string() << " " << to_hex(fingerprints_[i]) << "\n";
  }
}

std::vector<double> ensemble_predict(const EnsembleBundle& bundle, const TokenIds& context,
                                     std::span<const TokenIds> candidates) {
  if (candidates.size() < 2) {
    throw ContractError("ensemble_predict needs k >= 2");
  }
  std::vector<std::vector<double>> logits;
  for (const auto& m : bundle.members()) {
    logits.push_back(score_values(m, context, candidates));
  }
  return ensemble_average(logits);
}

std::vector<std::vector<double>> ensemble_probabilities(const EnsembleBundle& bundle,
                                                        const EvalSet& set) {
  std::vector<std::vector<std::vector<double>>> per_member;
  for (const auto& m : bundle.members()) {
    per_member.push_back(candidate_logits(m, set));
  }
  std::vector<std::vector<double>> out(set.size());
  std::vector<std::vector<double>> member_logits(bundle.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t m = 0; m < bundle.size(); ++m) {
      member_logits[m] = per_member[m][i];
    }
    out[i] = ensemble_average(member_logits);
  }
  return out;
}

}  // namespace mgt
