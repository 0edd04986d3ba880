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


#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "fixtures.hpp"
#include "mtl/checkpoint.hpp"
#include "mtl/errors.hpp"

using namespace mtl;
using namespace mtl::ag;
using mtl::testing::toy_setup;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mtl_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("archive round-trip is bit-exact") {
  Archive a;
  a.meta = R"({"note":"x"})";
  Tensor t = Tensor::matrix({{1.0 / 3.0, -0.0}, {1e-300, 12345.678}});
  a.add("w", t);
  a.add("empty-ish", Tensor::scalar(2.5));
  const auto path = scratch("plain.ckpt");
  a.write(path.string());
  const Archive b = Archive::read(path.string());
  CHECK(b.get("w") == t);
  CHECK(b.get("empty-ish")[0] == 2.5);
  CHECK(b.contains("w"));
  CHECK_FALSE(b.contains("v"));
  CHECK_THROWS_AS(b.get("v"), CompatibilityError);
  CHECK(b.meta.find("\"note\"") != std::string::npos);
  CHECK(slurp(path).rfind("MTLCKPT1", 0) == 0);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("model round-trip reproduces outputs for every architecture") {
  for (auto kind : kAllArchitectures) {
    CAPTURE(to_string(kind));
    auto s = toy_setup({"g", "g", "h"}, AlphaMode::InverseSize);
    MtlModel m = testing::toy_model(kind, s, 21);
    const auto path = scratch("model.ckpt");
    save_model(m, path.string(), R"({"run_config":{"k":1}})");
    const MtlModel back = load_model(path.string());

    CHECK(back.kind() == kind);
    CHECK(back.registry().size() == 3);
    CHECK(back.registry().group_of(1).name == "g");
    CHECK(back.registry().alpha(2) == m.registry().alpha(2));
    CHECK(back.vocab().words.labels() == m.vocab().words.labels());
    CHECK(back.registry().task(0).slots.labels() == m.registry().task(0).slots.labels());
    CHECK(back.config().hidden == m.config().hidden);
    CHECK(archive_extra(Archive::read(path.string())).find("run_config") != std::string::npos);

    const auto a = m.state();
    const auto b = back.state();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(a[i].value.value() == b[i].value.value());
      CHECK(a[i].value.requires_grad() == b[i].value.requires_grad());
    }
    NoRecordScope no_record;
    for (std::size_t t = 0; t < 3; ++t) {
      for (const auto& u : s.corpora[t]) {
        const auto e = encode(u, s.vocab, s.registry.task(t));
        const auto fa = m.forward(e, t);
        const auto fb = back.forward(e, t);
        CHECK(fa.emissions.value() == fb.emissions.value());
        CHECK(fa.intent_logits.value() == fb.intent_logits.value());
        CHECK(m.predict(e, t).slots == back.predict(e, t).slots);
      }
    }
  }
}

TEST_CASE("corrupt and incompatible checkpoints") {
  auto s = toy_setup({"g", "g"});
  MtlModel m = testing::toy_model(ArchitectureKind::ParallelUnivTask, s);
  const auto path = scratch("good.ckpt");
  save_model(m, path.string());
  const std::string bytes = slurp(path);

  CHECK_THROWS_AS(load_model(scratch("missing.ckpt").string()), ParseError);

  const auto foreign = scratch("foreign.ckpt");
  dump(foreign, "not a checkpoint at all");
  CHECK_THROWS_AS(load_model(foreign.string()), ParseError);

  const auto truncated = scratch("truncated.ckpt");
  dump(truncated, bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_model(truncated.string()), ParseError);

  // Same-length edit of the version field.
  std::string bumped = bytes;
  const auto at = bumped.find("\"version\":1");
  REQUIRE(at != std::string::npos);
  bumped[at + 10] = '9';
  const auto future = scratch("future.ckpt");
  dump(future, bumped);
  CHECK_THROWS_AS(load_model(future.string()), CompatibilityError);

  // Shape mismatch: an archive whose tensor has the wrong shape.
  Archive a = Archive::read(path.string());
  Archive reshaped;
  reshaped.meta = a.meta;
  for (const auto& [name, t] : a.tensors()) {
    reshaped.add(name, name == a.tensors().front().first ? Tensor::zeros(1, 1) : t);
  }
  CHECK_THROWS_AS(model_from_archive(reshaped), CompatibilityError);

  Archive missing;
  missing.meta = a.meta;
  for (std::size_t i = 1; i < a.tensors().size(); ++i) missing.add(a.tensors()[i].first, a.tensors()[i].second);
  CHECK_THROWS_AS(model_from_archive(missing), CompatibilityError);

  Archive no_meta;
  CHECK_THROWS_AS(model_from_archive(no_meta), CompatibilityError);
  fs::remove_all(path.parent_path());
}
