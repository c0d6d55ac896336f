#include "mgt/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "mgt/errors.hpp"
#include "mgt/hash.hpp"
#include "mgt/tokenizer.hpp"

namespace mgt {

namespace {

const std::string kDefaultSpec = R"(# Built-in synthetic dialog spec: ten task-oriented topics.
middle_turns.min = 0
middle_turns.max = 2

template.ask = what day would you like ? | how many people will there be ? | do you have a preferred time ? | is there anything else i should know ? | what area do you prefer ?
template.inform = it is for {people} people | we want to go on {day} | the {area} part of town would be nice | something {price} please | {time} works best for us
template.last = please book it for {people} people on {day} at {time} | can you make it {day} at {time} for {people} ? | i need it for {people} on {day} around {time} in the {area} | {people} people , {day} , {time} , {price} please

lexicon.people = one | two | three | four | five | six | seven | eight
lexicon.day = monday | tuesday | wednesday | thursday | friday | saturday | sunday
lexicon.time = 9am | 10am | 11am | noon | 1pm | 2pm | 3pm | 5pm | 6pm | 7pm | 8pm | 9pm
lexicon.area = north | south | east | west | centre
lexicon.price = cheap | moderate | expensive | budget

topic.restaurant.open = i am looking for a {kind} restaurant , maybe {entity} | i want to eat {kind} food , is {entity} any good ? | find me a table at a {kind} place like {entity}
topic.restaurant.reply = your table at {entity} is booked for {people} on {day} at {time} | {entity} serves {kind} food and has a table for {people} on {day} | i reserved {entity} , {kind} cuisine , {day} at {time}
lexicon.restaurant.kind = italian | chinese | indian | thai
lexicon.restaurant.entity = pizza hut | golden wok | curry garden | the bangkok | la margherita | saffron house

topic.hotel.open = i need a {kind} hotel to stay at , perhaps {entity} | can you find lodging with {kind} rooms , like {entity} ? | i am looking for a {kind} guesthouse near {entity}
topic.hotel.reply = i booked a {kind} room at {entity} for {people} guests from {day} | {entity} has {kind} rooms free on {day} for {people} guests | your stay at {entity} starts {day} , {kind} room , {people} guests
lexicon.hotel.kind = double | single | family | twin
lexicon.hotel.entity = acorn lodge | riverside inn | city stop | alpha hotel | cambridge belfry | ashley suites

topic.taxi.open = i need a taxi to {entity} , a {kind} if possible | please get me a cab going to {entity} | can you arrange a {kind} car to {entity} ?
topic.taxi.reply = a {kind} taxi will pick you up at {time} on {day} heading to {entity} | your cab to {entity} is booked for {time} , it is a {kind} | the {kind} car will take {people} passengers to {entity} at {time}
lexicon.taxi.kind = black sedan | white minivan | red hatchback | grey estate
lexicon.taxi.entity = the airport | the station | kings college | the bus terminal | the harbour | the stadium

topic.train.open = i need a train to {entity} , a {kind} service | are there trains going to {entity} ? | find me a {kind} train towards {entity}
topic.train.reply = train tr{code} to {entity} leaves at {time} on {day} , {people} tickets booked | i booked {people} seats on the {kind} train to {entity} at {time} | the {kind} service to {entity} departs {day} at {time}
lexicon.train.kind = express | stopping | overnight | direct
lexicon.train.entity = london | norwich | ely | peterborough | stansted | bishops stortford
lexicon.train.code = 1234 | 5678 | 2468 | 1357 | 8642 | 9753

topic.attraction.open = what {kind} can i visit , maybe {entity} ? | i want to see a {kind} like {entity} | are there any {kind} attractions such as {entity} ?
topic.attraction.reply = {entity} is a {kind} in the {area} , entry for {people} is free on {day} | i got {people} tickets for the {kind} at {entity} on {day} | {entity} , a {kind} , opens at {time} on {day}
lexicon.attraction.kind = museum | gallery | park | theatre
lexicon.attraction.entity = fitzwilliam | kettles yard | botanic garden | the junction | castle mound | whipple collection

topic.hospital.open = i need the {kind} department at {entity} | where is the {kind} ward of {entity} ? | i have to see a doctor in {kind} at {entity}
topic.hospital.reply = the {kind} department of {entity} can see you on {day} at {time} | your {kind} appointment at {entity} is {day} at {time} | {entity} {kind} ward has a slot at {time} on {day}
lexicon.hospital.kind = cardiology | paediatrics | neurology | oncology
lexicon.hospital.entity = addenbrookes | rosie clinic | papworth | royal infirmary | st marys | hope hospital

topic.police.open = i was robbed near {entity} and need the police | i want to report a {kind} at {entity} | who do i call about a {kind} near {entity} ?
topic.police.reply = officers will meet you at {entity} on {day} at {time} about the {kind} | the {kind} report for {entity} is filed , reference pc{code} | parkside station handles {kind} cases near {entity} , come by at {time}
lexicon.police.kind = theft | burglary | lost wallet | car accident
lexicon.police.entity = parkside | market square | the mill road | grafton centre | the backs | jesus green
lexicon.police.code = 101 | 202 | 303 | 404 | 505 | 606

topic.cinema.open = what {kind} films are showing at {entity} ? | i want to watch a {kind} movie at {entity} | any {kind} screenings at {entity} ?
topic.cinema.reply = {entity} shows a {kind} film at {time} on {day} , {people} seats reserved | i booked {people} tickets for the {kind} movie at {entity} , {time} | the {kind} screening at {entity} starts {day} at {time}
lexicon.cinema.kind = comedy | horror | drama | animated
lexicon.cinema.entity = vue | arts picturehouse | odeon | the light | cineworld | the round

topic.gym.open = i want a {kind} class at {entity} | does {entity} have {kind} sessions ? | sign me up for {kind} at {entity}
topic.gym.reply = the {kind} class at {entity} has room for {people} on {day} at {time} | you are signed up for {kind} at {entity} , {day} {time} | {entity} runs {kind} sessions on {day} , {people} spots held
lexicon.gym.kind = yoga | spinning | boxing | pilates
lexicon.gym.entity = pure gym | the leisure centre | kelsey kerridge | fitness first | the sports hall | body works

topic.library.open = i want to borrow a {kind} book from {entity} | does {entity} have {kind} titles ? | i am looking for {kind} books at {entity}
topic.library.reply = {entity} has the {kind} book on hold for you until {day} | i reserved {people} {kind} titles at {entity} for {day} | pick up your {kind} books at {entity} on {day} after {time}
lexicon.library.kind = history | poetry | science | cookery
lexicon.library.entity = central library | the seeley | milton road branch | arbury library | the wren | rock road branch
)";

std::vector<std::string> split_alternatives(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto bar = value.find('|', start);
    std::string part = value.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
    const auto b = part.find_first_not_of(' ');
    const auto e = part.find_last_not_of(' ');
    if (b != std::string::npos) {
      out.push_back(part.substr(b, e - b + 1));
    }
    if (bar == std::string::npos) {
      break;
    }
    start = bar + 1;
  }
  return out;
}

std::vector<std::string> placeholders(const std::string& tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string::npos) {
    const auto close = tmpl.find('}', pos);
    if (close == std::string::npos) {
      throw ConfigError("unterminated placeholder in template '" + tmpl + "'");
    }
    out.push_back(tmpl.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument(value);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError("generator key '" + key + "': expected an integer, got '" + value + "'");
  }
}

const Alternatives* find_lexicon(const GeneratorSpec& spec, const TopicSpec& topic,
                                 const std::string& slot) {
  if (auto it = topic.lexicons.find(slot); it != topic.lexicons.end()) {
    return &it->second;
  }
  if (auto it = spec.lexicons.find(slot); it != spec.lexicons.end()) {
    return &it->second;
  }
  return nullptr;
}

const Alternatives& topic_or_shared(const GeneratorSpec& spec, const TopicSpec& topic,
                                    const std::string& name) {
  if (auto it = topic.templates.find(name); it != topic.templates.end()) {
    return it->second;
  }
  return spec.templates.at(name);
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

class DialogFiller {
 public:
  DialogFiller(const GeneratorSpec& spec, const TopicSpec& topic, std::mt19937_64& rng)
      : spec_(spec), topic_(topic), rng_(rng) {}

  std::vector<std::string> fill(const Alternatives& alternatives) {
    const std::string& tmpl = pick(alternatives, rng_);
    std::string text;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
      const auto open = tmpl.find('{', pos);
      if (open == std::string::npos) {
        text += tmpl.substr(pos);
        break;
      }
      const auto close = tmpl.find('}', open);
      text += tmpl.substr(pos, open - pos);
      text += value(tmpl.substr(open + 1, close - open - 1));
      pos = close + 1;
    }
    return tokenize(text);
  }

 private:
  const std::string& value(const std::string& slot) {
    if (slot == "topic") {
      return topic_.name;
    }
    auto it = chosen_.find(slot);
    if (it == chosen_.end()) {
      it = chosen_.emplace(slot, pick(*find_lexicon(spec_, topic_, slot), rng_)).first;
    }
    return it->second;
  }

  const GeneratorSpec& spec_;
  const TopicSpec& topic_;
  std::mt19937_64& rng_;
  std::map<std::string, std::string> chosen_;
};

DialogExample generate_dialog(const GeneratorSpec& spec, int topic_index, std::mt19937_64& rng,
                              std::string id) {
  const TopicSpec& topic = spec.topics[static_cast<std::size_t>(topic_index)];
  DialogFiller filler(spec, topic, rng);
  DialogExample ex;
  ex.id = std::move(id);
  ex.topic = topic_index;
  ex.context.push_back({Speaker::user, filler.fill(topic.templates.at("open"))});
  ex.context.push_back({Speaker::system, filler.fill(topic_or_shared(spec, topic, "ask"))});
  std::uniform_int_distribution<int> middle(spec.middle_min, spec.middle_max);
  const int exchanges = middle(rng);
  for (int m = 0; m < exchanges; ++m) {
    ex.context.push_back({Speaker::user, filler.fill(topic_or_shared(spec, topic, "inform"))});
    ex.context.push_back({Speaker::system, filler.fill(topic_or_shared(spec, topic, "ask"))});
  }
  ex.context.push_back({Speaker::user, filler.fill(topic_or_shared(spec, topic, "last"))});
  ex.response = filler.fill(topic.templates.at("reply"));
  return ex;
}

Split generate_split(const GeneratorSpec& spec, const std::string& name, int count,
                     std::mt19937_64& rng) {
  Split split;
  split.name = name;
  std::uniform_int_distribution<int> topic(0, static_cast<int>(spec.topics.size()) - 1);
  char id[64];
  for (int i = 0; i < count; ++i) {
    std::snprintf(id, sizeof(id), "%s-%05d", name.c_str(), i);
    split.examples.push_back(generate_dialog(spec, topic(rng), rng, id));
  }
  return split;
}

}  // namespace

GeneratorSpec parse_generator_spec(const KeyValues& values) {
  GeneratorSpec spec;
  std::map<std::string, TopicSpec> topics;
  std::map<std::string, std::map<std::string, Alternatives>> topic_lexicons;
  for (const auto& [key, value] : values) {
    const auto parts_end = key.find('.');
    const std::string head = key.substr(0, parts_end);
    const std::string rest = parts_end == std::string::npos ? "" : key.substr(parts_end + 1);
    if (key == "middle_turns.min") {
      spec.middle_min = parse_int(key, value);
    } else if (key == "middle_turns.max") {
      spec.middle_max = parse_int(key, value);
    } else if (head == "template" && !rest.empty()) {
      spec.templates[rest] = split_alternatives(value);
    } else if (head == "topic" && rest.find('.') != std::string::npos) {
      const std::string name = rest.substr(0, rest.find('.'));
      const std::string tmpl = rest.substr(rest.find('.') + 1);
      topics[name].name = name;
      topics[name].templates[tmpl] = split_alternatives(value);
    } else if (head == "lexicon" && !rest.empty()) {
      const auto dot = rest.find('.');
      if (dot == std::string::npos) {
        spec.lexicons[rest] = split_alternatives(value);
      } else {
        topic_lexicons[rest.substr(0, dot)][rest.substr(dot + 1)] = split_alternatives(value);
      }
    } else {
      throw ConfigError("unknown generator key '" + key + "'");
    }
  }
  for (auto& [name, lexicons] : topic_lexicons) {
    auto it = topics.find(name);
    if (it == topics.end()) {
      throw ConfigError("lexicon for unknown topic '" + name + "'");
    }
    it->second.lexicons = std::move(lexicons);
  }
  for (auto& [name, topic] : topics) {
    spec.topics.push_back(std::move(topic));
  }

  if (spec.topics.empty()) {
    throw ConfigError("generator spec defines no topics");
  }
  if (spec.middle_min < 0 || spec.middle_max < spec.middle_min) {
    throw ConfigError("generator spec needs 0 <= middle_turns.min <= middle_turns.max");
  }
  auto check_alternatives = [](const std::string& what, const Alternatives& alts) {
    if (alts.empty()) {
      throw ConfigError(what + " has no alternatives");
    }
  };
  for (const auto& [name, lex] : spec.lexicons) {
    check_alternatives("lexicon." + name, lex);
  }
  for (const auto& topic : spec.topics) {
    for (const char* required : {"open", "reply"}) {
      if (!topic.templates.count(required)) {
        throw ConfigError("topic '" + topic.name + "' has no '" + required + "' template");
      }
    }
    for (const char* shared : {"ask", "inform", "last"}) {
      if (!topic.templates.count(shared) && !spec.templates.count(shared)) {
        throw ConfigError("topic '" + topic.name + "' has no '" + shared +
                          "' template and no shared template." + shared);
      }
    }
    for (const auto& [lname, lex] : topic.lexicons) {
      check_alternatives("lexicon." + topic.name + "." + lname, lex);
    }
    auto check_template_set = [&](const std::string& what, const Alternatives& alts) {
      check_alternatives(what, alts);
      for (const auto& t : alts) {
        for (const auto& slot : placeholders(t)) {
          if (slot != "topic" && find_lexicon(spec, topic, slot) == nullptr) {
            throw ConfigError(what + " uses {" + slot + "} but topic '" + topic.name +
                              "' has no lexicon for it");
          }
        }
      }
    };
    for (const auto& [tname, alts] : topic.templates) {
      check_template_set("topic." + topic.name + "." + tname, alts);
    }
    for (const auto& [tname, alts] : spec.templates) {
      check_template_set("template." + tname, alts);
    }
  }
  return spec;
}

GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
  return parse_generator_spec(load_key_values(path));
}

const std::string& default_generator_spec_text() { return kDefaultSpec; }

GeneratorSpec default_generator_spec() {
  return parse_generator_spec(parse_key_values(kDefaultSpec, "<built-in generator spec>"));
}

void assign_candidates(Split& split, int k, std::uint64_t seed) {
  if (k < 2) {
    throw ConfigError("candidate sets need k >= 2");
  }
  std::map<std::vector<std::string>, std::vector<int>> same_text;
  for (int i = 0; i < static_cast<int>(split.size()); ++i) {
    same_text[split.examples[static_cast<std::size_t>(i)].response].push_back(i);
  }
  const std::uint64_t split_seed = mix_seed(seed, hash_bytes(split.name));
  for (int i = 0; i < static_cast<int>(split.size()); ++i) {
    auto& ex = split.examples[static_cast<std::size_t>(i)];
    const auto& dups = same_text[ex.response];
    std::vector<int> eligible;
    eligible.reserve(split.size());
    for (int j = 0; j < static_cast<int>(split.size()); ++j) {
      if (std::find(dups.begin(), dups.end(), j) == dups.end()) {
        eligible.push_back(j);
      }
    }
    if (static_cast<int>(eligible.size()) < k - 1) {
      throw SamplingError("split '" + split.name + "' has too few distinct responses for " +
                          std::to_string(k) + " candidates (example " + ex.id + ")");
    }
    std::mt19937_64 rng(mix_seed(split_seed, static_cast<std::uint64_t>(i)));
    for (int t = 0; t < k - 1; ++t) {
      std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(t), eligible.size() - 1);
      std::swap(eligible[static_cast<std::size_t>(t)], eligible[d(rng)]);
    }
    ex.candidates.assign(eligible.begin(), eligible.begin() + (k - 1));
    std::uniform_int_distribution<int> position(0, k - 1);
    ex.candidates.insert(ex.candidates.begin() + position(rng), i);
  }
}

SyntheticCorpus generate_synthetic_corpus(const GeneratorSpec& spec, const SplitSizes& sizes, int k,
                                          std::uint64_t seed) {
  if (sizes.train < 1 || sizes.valid < 1 || sizes.test < 1) {
    throw ConfigError("every split needs at least one dialog");
  }
  SyntheticCorpus corpus;
  std::mt19937_64 rng(mix_seed(seed, 0x67656e));
  corpus.train = generate_split(spec, "train", sizes.train, rng);
  corpus.valid = generate_split(spec, "valid", sizes.valid, rng);
  corpus.test = generate_split(spec, "test", sizes.test, rng);
  assign_candidates(corpus.valid, k, seed);
  assign_candidates(corpus.test, k, seed);
  for (const auto& t : spec.topics) {
    corpus.topic_names.push_back(t.name);
  }
  return corpus;
}

std::vector<std::string> topic_slot_tokens(const GeneratorSpec& spec, int topic,
                                           const std::vector<std::string>& tokens) {
  // Tokens that also occur in another topic's lexicons (e.g. "the") are not
  // topic-specific and are dropped.
  auto lexicon_of = [&](const TopicSpec& t) {
    std::set<std::string> out;
    for (const auto& [name, values] : t.lexicons) {
      for (const auto& v : values) {
        for (auto& tok : tokenize(v)) {
          out.insert(std::move(tok));
        }
      }
    }
    return out;
  };
  std::set<std::string> lexicon = lexicon_of(spec.topics.at(static_cast<std::size_t>(topic)));
  for (std::size_t other = 0; other < spec.topics.size(); ++other) {
    if (static_cast<int>(other) != topic) {
      for (const auto& tok : lexicon_of(spec.topics[other])) {
        lexicon.erase(tok);
      }
    }
  }
  std::set<std::string> found;
  for (const auto& tok : tokens) {
    if (lexicon.count(tok)) {
      found.insert(tok);
    }
  }
  return {found.begin(), found.end()};
}

}  // namespace mgt
