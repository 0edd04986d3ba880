// Copyright 2026 The mtlnlu Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small corpora and model setups shared by the unit and acceptance tests.

#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtl/data.hpp"
#include "mtl/model.hpp"

namespace mtl::testing {

/// Parses "w1/TAG w2/TAG ..." into an utterance.
inline Utterance utt(const std::string& tagged, const std::string& intent,
                     const std::string& task = "") {
  Utterance u;
  std::istringstream in(tagged);
  for (std::string item; in >> item;) {
    const auto slash = item.rfind('/');
    u.tokens.push_back(item.substr(0, slash));
    u.slots.push_back(item.substr(slash + 1));
  }
  u.intent = intent;
  u.task = task;
  return u;
}

inline std::vector<Utterance> toy_corpus(int which) {
  switch (which % 3) {
    case 0:
      return {utt("play/O madonna/B-artist", "play_music"),
              utt("play/O some/O jazz/B-genre", "play_music"),
              utt("add/O queen/B-artist to/O my/O list/O", "add_to_playlist")};
    case 1:
      return {utt("weather/O in/O paris/B-city", "get_weather"),
              utt("book/O a/O table/O in/O new/B-city york/I-city", "book_restaurant"),
              utt("rain/O tomorrow/B-date", "get_weather")};
    default:
      return {utt("rate/O this/O book/B-object five/B-rating", "rate_book"),
              utt("find/O the/O movie/B-type alien/B-title", "search_creative_work")};
  }
}

struct ToySetup {
  std::vector<std::vector<Utterance>> corpora;
  TaskRegistry registry;
  Vocabulary vocab;
};

/// `groups[i]` is the group of task i; task names are t0, t1, ...
inline ToySetup toy_setup(const std::vector<std::string>& groups,
                          AlphaMode mode = AlphaMode::Uniform) {
  ToySetup s;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto c = toy_corpus(static_cast<int>(i));
    for (auto& u : c) u.task = "t" + std::to_string(i);
    s.corpora.push_back(std::move(c));
  }
  std::vector<TaskDefinition> defs;
  std::vector<const std::vector<Utterance>*> sets;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    defs.push_back({"t" + std::to_string(i), groups[i], &s.corpora[i]});
    sets.push_back(&s.corpora[i]);
  }
  s.registry = TaskRegistry::build(defs, mode);
  s.vocab = build_vocab(sets);
  return s;
}

inline ModelConfig tiny_config(ArchitectureKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.word_dim = 4;
  c.char_dim = 3;
  c.char_hidden = 2;
  c.hidden = 3;
  return c;
}

inline MtlModel toy_model(ArchitectureKind kind, const ToySetup& s, std::uint64_t seed = 7) {
  Rng rng(seed);
  return MtlModel::build(tiny_config(kind), s.registry, s.vocab, rng);
}

/// Flight-booking queries in the ATIS style: BIO slots for departure and
/// arrival cities, dates, times, airlines and fare attributes. Deterministic
/// for a given seed; used when the real ATIS files are not available.
inline std::vector<Utterance> synthetic_atis(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> cities = {"boston", "denver", "new york", "san francisco",
                                           "dallas", "pittsburgh", "salt lake city", "atlanta",
                                           "baltimore", "washington", "philadelphia", "oakland"};
  const std::vector<std::string> days = {"monday", "tuesday", "wednesday", "thursday",
                                         "friday", "saturday", "sunday"};
  const std::vector<std::string> periods = {"morning", "afternoon", "evening"};
  const std::vector<std::string> airlines = {"delta", "united", "american airlines",
                                             "us air", "continental"};
  const std::vector<std::string> costs = {"cheapest", "lowest", "least expensive"};
  const std::vector<std::string> codes = {"qx", "y", "f", "h", "qo"};
  auto pick = [&](const std::vector<std::string>& xs) {
    return xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)];
  };

  Utterance u;
  auto words = [&](const std::string& text) {
    std::istringstream in(text);
    for (std::string w; in >> w;) {
      u.tokens.push_back(w);
      u.slots.push_back("O");
    }
  };
  auto slot = [&](const std::string& label, const std::string& text) {
    std::istringstream in(text);
    bool first = true;
    for (std::string w; in >> w;) {
      u.tokens.push_back(w);
      u.slots.push_back((first ? "B-" : "I-") + label);
      first = false;
    }
  };

  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    u = Utterance{};
    std::string from = pick(cities);
    std::string to = pick(cities);
    while (to == from) to = pick(cities);
    const int kind = std::uniform_int_distribution<int>(0, 9)(rng);
    switch (kind) {
      case 0:
        words("i want to fly from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        words("on");
        slot("depart_date.day_name", pick(days));
        u.intent = "atis_flight";
        break;
      case 1:
        words("show me flights from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        slot("depart_date.day_name", pick(days));
        slot("depart_time.period_of_day", pick(periods));
        u.intent = "atis_flight";
        break;
      case 2:
        words("list");
        slot("airline_name", pick(airlines));
        words("flights from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        u.intent = "atis_flight";
        break;
      case 3:
        words("what is the");
        slot("cost_relative", pick(costs));
        words("fare from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        u.intent = "atis_airfare";
        break;
      case 4:
        words("how much is a");
        slot("round_trip", "round trip");
        words("ticket from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        u.intent = "atis_airfare";
        break;
      case 5:
        words("what ground transportation is available in");
        slot("city_name", from);
        u.intent = "atis_ground_service";
        break;
      case 6:
        words("which airlines fly from");
        slot("fromloc.city_name", from);
        words("to");
        slot("toloc.city_name", to);
        u.intent = "atis_airline";
        break;
      case 7:
        words("what does fare code");
        slot("fare_basis_code", pick(codes));
        words("mean");
        u.intent = "atis_abbreviation";
        break;
      case 8:
        words("what time does the");
        slot("airline_name", pick(airlines));
        words("flight from");
        slot("fromloc.city_name", from);
        words("arrive in");
        slot("toloc.city_name", to);
        u.intent = "atis_flight_time";
        break;
      default:
        words("show me ground transportation in");
        slot("city_name", from);
        words("on");
        slot("depart_date.day_name", pick(days));
        u.intent = "atis_ground_service";
        break;
    }
    u.task = "atis";
    out.push_back(u);
  }
  return out;
}

}  // namespace mtl::testing
