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


#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mtl/data.hpp"
#include "mtl/errors.hpp"

using namespace mtl;
using mtl::testing::utt;
namespace fs = std::filesystem;

namespace {

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_corpus(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::vector<Utterance> ten_utterances() {
  std::vector<Utterance> out;
  for (int i = 0; i < 10; ++i) {
    std::string text;
    for (int t = 0; t <= i % 4; ++t) text += "w" + std::to_string(i) + "_" + std::to_string(t) + "/O ";
    out.push_back(utt(text, "i" + std::to_string(i % 3)));
  }
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtl_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("bio tag shapes") {
  CHECK(is_bio_tag("O"));
  CHECK(is_bio_tag("B-city"));
  CHECK(is_bio_tag("I-fromloc.city_name"));
  CHECK_FALSE(is_bio_tag("B-"));
  CHECK_FALSE(is_bio_tag("X-city"));
  CHECK_FALSE(is_bio_tag("o"));
  CHECK_FALSE(is_bio_tag("city"));
}

TEST_CASE("corpus parse and serialize round-trip") {
  const std::string text =
      "play\tO\nmadonna\tB-artist\n#intent=play_music\n\n\n"
      "weather\tO\r\nin\tO\r\nnew\tB-city\r\nyork\tI-city\r\n#intent=get_weather\r\n";
  std::istringstream in(text);
  const auto parsed = read_corpus(in);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].tokens == std::vector<std::string>{"play", "madonna"});
  CHECK(parsed[0].slots == std::vector<std::string>{"O", "B-artist"});
  CHECK(parsed[1].intent == "get_weather");
  CHECK(parsed[1].slots.back() == "I-city");

  std::ostringstream out;
  write_corpus(out, parsed);
  std::istringstream again(out.str());
  const auto reparsed = read_corpus(again);
  REQUIRE(reparsed.size() == parsed.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(reparsed[i].tokens == parsed[i].tokens);
    CHECK(reparsed[i].slots == parsed[i].slots);
    CHECK(reparsed[i].intent == parsed[i].intent);
  }
  // Serializing the normalized form is a fixed point.
  std::ostringstream out2;
  write_corpus(out2, reparsed);
  CHECK(out2.str() == out.str());

  const auto synth = testing::synthetic_atis(50, 3);
  std::ostringstream s1;
  write_corpus(s1, synth);
  std::istringstream s1_in(s1.str());
  const auto synth_back = read_corpus(s1_in);
  REQUIRE(synth_back.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(synth_back[i].tokens == synth[i].tokens);
    CHECK(synth_back[i].slots == synth[i].slots);
    CHECK(synth_back[i].intent == synth[i].intent);
  }
}

TEST_CASE("parse errors carry line numbers") {
  CHECK(parse_error_line("a\tO\nb\tQ-x\n#intent=i\n") == 2);
  CHECK(parse_error_line("a\tO\nb O\n#intent=i\n") == 2);
  CHECK(parse_error_line("a\tO\n#intent=i\nb\tO\n") == 3);
  CHECK(parse_error_line("a\tO\nb\tO\n\n") == 3);
  CHECK(parse_error_line("a\tO\n#intent=\n") == 2);
  CHECK(parse_error_line("x\tO\n#intent=i\n\n#intent=j\n") == 4);
  CHECK(parse_error_line("a\tO\tB-x\n#intent=i\n") == 1);
}

TEST_CASE("empty corpus file gives an empty list") {
  const fs::path dir = scratch_dir("empty");
  const fs::path file = dir / "empty.txt";
  std::ofstream(file).close();
  CHECK(load_corpus(file.string()).empty());
  CHECK_THROWS_AS(load_corpus((dir / "missing.txt").string()), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("parallel-file layout") {
  const fs::path dir = scratch_dir("parallel");
  std::ofstream(dir / "seq.in") << "list flights to boston\nshow fares\n";
  std::ofstream(dir / "seq.out") << "O O O B-toloc.city_name\nO O\n";
  std::ofstream(dir / "label") << "atis_flight\natis_airfare\n";
  const auto us = load_any(dir.string());
  REQUIRE(us.size() == 2);
  CHECK(us[0].tokens.size() == 4);
  CHECK(us[0].slots[3] == "B-toloc.city_name");
  CHECK(us[1].intent == "atis_airfare");

  std::ofstream(dir / "seq.out") << "O O O\nO O\n";
  try {
    load_parallel_files(dir.string());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("split_snips follows the intent table") {
  const std::map<std::string, std::string> table = {
      {"search_creative_work", "snips-creative"}, {"rate_book", "snips-creative"},
      {"play_music", "snips-music"},              {"add_to_playlist", "snips-music"},
      {"get_weather", "snips-location"},          {"book_restaurant", "snips-location"},
      {"search_screening_event", "snips-location"}};
  for (const auto& [intent, domain] : table) CHECK(snips_domain(intent) == domain);
  CHECK_THROWS_AS(snips_domain("atis_flight"), ClassificationError);

  std::vector<Utterance> all;
  std::mt19937_64 rng(11);
  std::vector<std::string> intents;
  for (const auto& kv : table) intents.push_back(kv.first);
  for (int i = 0; i < 70; ++i) {
    all.push_back(utt("w" + std::to_string(i) + "/O",
                      intents[std::uniform_int_distribution<std::size_t>(0, 6)(rng)]));
  }
  const auto split = split_snips(all);
  CHECK(split.creative.size() + split.music.size() + split.location.size() == all.size());

  // Order within each part matches input order.
  std::map<std::string, std::vector<std::string>> expected;
  for (const auto& u : all) expected[table.at(u.intent)].push_back(u.tokens[0]);
  auto words = [](const std::vector<Utterance>& us) {
    std::vector<std::string> out;
    for (const auto& u : us) out.push_back(u.tokens[0]);
    return out;
  };
  CHECK(words(split.creative) == expected["snips-creative"]);
  CHECK(words(split.music) == expected["snips-music"]);
  CHECK(words(split.location) == expected["snips-location"]);
  for (const auto& u : split.music) CHECK(u.task == "snips-music");

  const auto again = split_snips(all);
  CHECK(words(again.location) == words(split.location));

  all.push_back(utt("x/O", "atis_flight"));
  try {
    split_snips(all);
    FAIL("expected a classification error");
  } catch (const ClassificationError& e) {
    CHECK(std::string(e.what()).find("atis_flight") != std::string::npos);
  }
}

TEST_CASE("vocabulary") {
  const std::vector<Utterance> train = {utt("a/O b/O", "x"), utt("b/O a/O a/O", "y")};
  const Vocabulary v = build_vocab(train);
  CHECK(v.words.size() == 4);
  CHECK(v.words.id(kPadToken) == 0);
  CHECK(v.words.id(kUnkToken) == 1);
  CHECK(v.word_id("zebra") == 1);
  CHECK(v.chars.size() == 4);
  CHECK(v.char_ids("az") == std::vector<std::int32_t>{v.chars.id("a"), 1});

  for (std::size_t i = 0; i < v.words.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    CHECK(v.words.id(v.words.label(id)) == id);
  }
  CHECK_THROWS_AS(v.words.label(4), VocabError);
  CHECK_THROWS_AS(v.words.id("zebra"), VocabError);
}

TEST_CASE("registry label maps and groups") {
  auto s = testing::toy_setup({"g", "g", "t2"});
  CHECK(s.registry.size() == 3);
  CHECK(s.registry.group_of(0).name == "g");
  CHECK(s.registry.group_of(1).members == std::vector<std::size_t>{0, 1});
  CHECK(s.registry.index_in_group(1) == 1);
  CHECK(s.registry.group_of(2).members == std::vector<std::size_t>{2});
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& t = s.registry.task(k);
    CHECK(t.slots.id("O") == 0);
    for (std::size_t i = 0; i < t.slots.size(); ++i) {
      const auto id = static_cast<std::int32_t>(i);
      CHECK(t.slots.id(t.slots.label(id)) == id);
    }
    for (std::size_t i = 0; i < t.intents.size(); ++i) {
      const auto id = static_cast<std::int32_t>(i);
      CHECK(t.intents.id(t.intents.label(id)) == id);
    }
    CHECK(s.registry.alpha(k) == 1.0);
  }
  CHECK(s.registry.task(0).intents.size() == 2);
  CHECK_THROWS_AS(s.registry.task_id("nope"), RegistryError);

  std::vector<Utterance> empty;
  CHECK_THROWS_AS(TaskRegistry::build({{"e", "", &empty}}, AlphaMode::Uniform), RegistryError);
  auto c = testing::toy_corpus(0);
  CHECK_THROWS_AS(TaskRegistry::build({{"a", "", &c}, {"a", "", &c}}, AlphaMode::Uniform),
                  RegistryError);
}

TEST_CASE("inverse-size loss weights") {
  // Table 1 training sizes of ATIS and Snips.
  std::vector<Utterance> atis(4478, utt("a/O", "i"));
  std::vector<Utterance> snips(13084, utt("b/O", "j"));
  const auto reg = TaskRegistry::build({{"atis", "", &atis}, {"snips", "", &snips}},
                                       AlphaMode::InverseSize);
  CHECK(reg.alpha(0) / reg.alpha(1) == doctest::Approx(13084.0 / 4478.0).epsilon(1e-12));
  CHECK(13084.0 / 4478.0 == doctest::Approx(2.9219).epsilon(1e-4));
  CHECK(std::max(reg.alpha(0), reg.alpha(1)) == 1.0);
  CHECK(reg.alpha(1) > 0.0);
}

TEST_CASE("encoding") {
  auto s = testing::toy_setup({"t0"});
  const auto& task = s.registry.task(0);
  const auto e = encode(s.corpora[0][0], s.vocab, task);
  CHECK(e.words.size() == 2);
  CHECK(e.slots[1] == task.slots.id("B-artist"));
  CHECK(e.intent == task.intents.id("play_music"));

  const Utterance unseen = utt("play/O elvis/B-singer", "dance");
  CHECK_THROWS_AS(encode(unseen, s.vocab, task), VocabError);
  const auto lenient = encode(unseen, s.vocab, task, true);
  CHECK(lenient.words[1] == 1);
  CHECK(lenient.slots[1] == -1);
  CHECK(lenient.intent == -1);
}

TEST_CASE("make_batches") {
  auto corpus = ten_utterances();
  auto s = testing::toy_setup({"t0"});
  // Registry built from the toy corpus; encode leniently against it.
  const auto encoded = encode_all(corpus, build_vocab(corpus), s.registry.task(0), true);

  std::mt19937_64 rng(5);
  const auto batches = make_batches(encoded, 3, 4, rng);
  std::vector<std::size_t> sizes;
  for (const auto& b : batches) sizes.push_back(b.rows);
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});

  std::mt19937_64 rng2(5);
  const auto again = make_batches(encoded, 3, 4, rng2);
  REQUIRE(again.size() == batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) {
    CHECK(again[i].source_indices == batches[i].source_indices);
    CHECK(again[i].words == batches[i].words);
  }

  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.task == 3);
    for (std::size_t r = 0; r < b.rows; ++r) {
      seen.insert(b.source_indices[r]);
      const auto& src = encoded[b.source_indices[r]];
      CHECK(b.lengths[r] == src.words.size());
      // Mask is a contiguous prefix of the true length.
      for (std::size_t t = 0; t < b.max_len; ++t) {
        CHECK(b.mask[r * b.max_len + t] == (t < src.words.size() ? 1 : 0));
      }
      const auto row = b.row(r);
      CHECK(row.words == src.words);
      CHECK(row.chars == src.chars);
    }
  }
  std::multiset<std::size_t> all;
  for (std::size_t i = 0; i < corpus.size(); ++i) all.insert(i);
  CHECK(seen == all);

  std::mt19937_64 rng3(6);
  CHECK(make_batches(encoded, 0, 1, rng3).size() == 10);
  CHECK_THROWS_AS(make_batches(encoded, 0, 0, rng3), ContractError);
}
