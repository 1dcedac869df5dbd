#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "support.hpp"
#include "xdtl/dataset.hpp"
#include "xdtl/errors.hpp"

using namespace xdtl;
using Eigen::Index;
using Eigen::MatrixXd;

namespace {

data::ManifestRecord rec(std::string id, std::string subject, data::Modality m, bool labeled,
                         bool extended = false) {
  return {id, subject, m, "images/" + id + ".png", labeled, std::nullopt, extended};
}

std::vector<data::ManifestRecord> paired_manifest(int pairs, int unlabeled_skulls, int extended) {
  std::vector<data::ManifestRecord> out;
  for (int i = 0; i < pairs; ++i) {
    const std::string s = "P" + std::to_string(i);
    out.push_back(rec(s + "f", s, data::Modality::face, true));
    out.push_back(rec(s + "s", s, data::Modality::skull, true));
  }
  for (int i = 0; i < unlabeled_skulls; ++i) {
    out.push_back(rec("U" + std::to_string(i), "U" + std::to_string(i), data::Modality::skull, false));
  }
  for (int i = 0; i < extended; ++i) {
    out.push_back(rec("E" + std::to_string(i), "E" + std::to_string(i), data::Modality::face, false, true));
  }
  return out;
}

ImageTensor textured(std::uint64_t seed) {
  // Smooth random texture so that NCC has a clear peak.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXd m(64, 64);
  for (Index i = 0; i < m.size(); ++i) m(i) = g(rng);
  m = data::gaussian_blur(m, 2.0);
  m = (m.array() - m.minCoeff()) / (m.maxCoeff() - m.minCoeff());
  return ImageTensor{m, {}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("manifest validation") {
  auto m = paired_manifest(35, 429, 0);
  CHECK(m.size() == 499);
  CHECK_NOTHROW(data::validate_manifest(m));
  CHECK(data::count_pairs(m) == 35);
  CHECK_NOTHROW(data::validate_manifest(std::vector<data::ManifestRecord>{}));

  auto dangling = m;
  dangling.push_back(rec("lonely", "lonely", data::Modality::face, true));
  CHECK_THROWS_WITH_AS(data::validate_manifest(dangling), doctest::Contains("dangling pair"), DataError);

  auto dup = m;
  dup.push_back(m.front());
  CHECK_THROWS_WITH_AS(data::validate_manifest(dup), doctest::Contains("duplicate"), DataError);
}

TEST_CASE("manifest JSON schema") {
  testing::TempDir dir("manifest");
  const auto m = paired_manifest(5, 3, 2);
  data::write_manifest(dir / "m.json", m);
  CHECK(data::load_manifest(dir / "m.json", false) == m);

  std::ofstream(dir / "empty.json") << "[]";
  CHECK(data::load_manifest(dir / "empty.json").empty());

  std::ofstream(dir / "extra.json")
      << R"([{"sample_id":"a","subject_id":"a","modality":"face","path":"a.png","labeled":false,"color":1}])";
  CHECK_THROWS_AS(data::load_manifest(dir / "extra.json", false), DataError);
  std::ofstream(dir / "mod.json")
      << R"([{"sample_id":"a","subject_id":"a","modality":"hand","path":"a.png","labeled":false}])";
  CHECK_THROWS_AS(data::load_manifest(dir / "mod.json", false), DataError);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(data::load_manifest(dir / "bad.json", false), DataError);
  CHECK_THROWS_WITH_AS(data::load_manifest(dir / "m.json", true), doctest::Contains("unreadable image"), DataError);
  CHECK_THROWS_AS(data::load_manifest(dir / "absent.json"), DataError);
}

TEST_CASE("preprocess") {
  RawImage gray{64, 64, 1, std::vector<std::uint8_t>(64 * 64)};
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = static_cast<std::uint8_t>(i % 256);
  const auto g = data::preprocess(gray);
  CHECK(g.height() == 64);
  for (Index y = 0; y < 64; ++y)
    for (Index x = 0; x < 64; ++x) CHECK(g.pixels(y, x) == gray.data[static_cast<std::size_t>(y * 64 + x)] / 255.0);

  RawImage white{8, 8, 3, std::vector<std::uint8_t>(8 * 8 * 3, 255)};
  CHECK((data::preprocess(white).pixels.array() == 1.0).all());

  RawImage rgb{1, 1, 3, {255, 0, 0}};
  CHECK(data::preprocess(rgb, 1).pixels(0, 0) == doctest::Approx(0.299));

  // 128 wide by 64 high: only the central 64 columns survive the crop.
  RawImage wide{128, 64, 1, std::vector<std::uint8_t>(128 * 64, 0)};
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 96; ++x) wide.data[static_cast<std::size_t>(y * 128 + x)] = 200;
  CHECK((data::preprocess(wide).pixels.array() == 200.0 / 255.0).all());

  RawImage bad{4, 4, 2, std::vector<std::uint8_t>(32)};
  CHECK_THROWS_AS(data::preprocess(bad), DataError);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4};
  CHECK_THROWS_AS(data::preprocess(junk), DataError);
}

TEST_CASE("png round trip through preprocess") {
  testing::TempDir dir("png");
  const auto img = textured(3);
  image_io::write_png(dir / "a.png", img);
  const auto back = data::preprocess(image_io::read_file(dir / "a.png"));
  CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("ncc") {
  const auto a = textured(1);
  CHECK(*data::ncc(a.pixels, a.pixels) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*data::ncc(a.pixels, (2.0 * a.pixels.array() + 1.0).matrix()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*data::ncc(a.pixels, -a.pixels) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_FALSE(data::ncc(a.pixels, MatrixXd::Constant(64, 64, 0.2)).has_value());
}

TEST_CASE("registration examples") {
  const auto ref = textured(5);
  const std::vector<double> scales{0.95, 1.0, 1.05};
  const auto same = data::register_image(ref, ref, 4, scales);
  CHECK(same.dx == 0);
  CHECK(same.dy == 0);
  CHECK(same.scale == 1.0);
  CHECK(same.ncc == doctest::Approx(1.0));
  CHECK(same.image.pixels == ref.pixels);

  const auto moved = data::warp(ref, 3, -2, 1.0);
  const auto r = data::register_image(moved, ref, 6, scales);
  CHECK(std::abs(r.dx + 3) <= 1);
  CHECK(std::abs(r.dy - 2) <= 1);

  const ImageTensor flat{MatrixXd::Constant(64, 64, 0.5), {}};
  const auto f = data::register_image(flat, ref, 4, scales);
  CHECK(f.dx == 0);
  CHECK(f.dy == 0);
  CHECK(f.image.pixels == flat.pixels);

  CHECK_THROWS_AS(data::register_image(ref, ref, 9, scales), ArgumentError);
  CHECK_THROWS_AS(data::register_image(ref, ref, 2, std::vector<double>{1.2}), ArgumentError);
}

TEST_CASE("property: registration never lowers correlation") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> shift(-4, 4);
  for (int t = 0; t < 10; ++t) {
    const auto ref = textured(rng());
    const auto img = data::warp(textured(rng()), shift(rng), shift(rng), 1.0);
    const auto r = data::register_image(img, ref, 3, std::vector<double>{1.0});
    CHECK(r.ncc >= *data::ncc(img.pixels, ref.pixels));
    CHECK(data::register_image(img, ref, 3, std::vector<double>{1.0}).image.pixels == r.image.pixels);
  }
}

TEST_CASE("warp with the identity is exact") {
  const auto a = textured(6);
  CHECK(data::warp(a, 0, 0, 1.0).pixels == a.pixels);
  const auto b = data::warp(a, 2, 0, 1.0);
  CHECK(b.pixels.block(0, 2, 64, 62) == a.pixels.block(0, 0, 64, 62));
}

TEST_CASE("augmentation order and counting") {
  const auto a = textured(7);
  data::AugmentationSpec spec;
  std::vector<std::size_t> source;
  const std::vector<ImageTensor> in{a};
  const auto out = data::augment(in, spec, &source);
  REQUIRE(out.size() == 6);
  CHECK(spec.copies_per_image() == 6);
  CHECK(source == std::vector<std::size_t>(6, 0));
  const MatrixXd flipped = a.pixels.rowwise().reverse();
  CHECK(out[0].pixels == a.pixels);
  CHECK(out[1].pixels == flipped);
  CHECK(out[2].pixels == (0.8 * a.pixels).cwiseMin(1.0));
  CHECK(out[3].pixels == (1.2 * a.pixels).cwiseMin(1.0));
  CHECK(out[4].pixels == (0.8 * flipped).cwiseMin(1.0));
  CHECK(out[5].pixels == (1.2 * flipped).cwiseMin(1.0));
  CHECK(data::flip_horizontal(data::flip_horizontal(a)).pixels == a.pixels);

  spec.flip_y = false;
  spec.brightness_factors = {1.0};
  const auto plain = data::augment(in, spec);
  REQUIRE(plain.size() == 2);
  CHECK(plain[1].pixels == a.pixels);

  const std::vector<ImageTensor> two{a, textured(8)};
  std::vector<std::size_t> src2;
  data::augment(two, data::AugmentationSpec{}, &src2);
  CHECK(src2 == std::vector<std::size_t>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
}

TEST_CASE("P1 folds over 35 pairs") {
  const auto m = paired_manifest(35, 429, 0);
  const auto plan = data::plan_folds(m, data::Protocol::P1, 4);
  REQUIRE(plan.folds.size() == 5);
  std::set<std::string> all;
  for (const auto& f : plan.folds) {
    CHECK(f.test_subjects.size() == 7);
    CHECK(f.gallery.size() == 7);
    CHECK(f.probes.size() == 7);
    CHECK(f.train_faces.size() == 28);
    CHECK(f.train_skulls.size() == 28);
    CHECK(f.unlabeled.size() == 429);
    all.insert(f.test_subjects.begin(), f.test_subjects.end());
  }
  CHECK(all.size() == 35);
}

TEST_CASE("P2 folds carry the extended gallery") {
  const auto m = paired_manifest(35, 10, 993);
  const auto plan = data::plan_folds(m, data::Protocol::P2, 4);
  for (const auto& f : plan.folds) {
    CHECK(f.gallery.size() == 1000);
    CHECK(f.probes.size() == 7);
    for (const auto& id : f.unlabeled) CHECK(id[0] != 'E');
  }
  CHECK_THROWS_AS(data::plan_folds(paired_manifest(35, 0, 0), data::Protocol::P2, 1), DataError);
  CHECK_THROWS_AS(data::plan_folds(paired_manifest(4, 3, 0), data::Protocol::P1, 1), ArgumentError);
}

TEST_CASE("property: fold partitions are disjoint, covering and leak-free") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 40; ++t) {
    const int pairs = 5 + static_cast<int>(rng() % 60);
    const auto m = paired_manifest(pairs, static_cast<int>(rng() % 20), 0);
    const auto seed = rng();
    const auto plan = data::plan_folds(m, data::Protocol::P1, seed);
    std::set<std::string> seen;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& f : plan.folds) {
      lo = std::min(lo, f.test_subjects.size());
      hi = std::max(hi, f.test_subjects.size());
      const std::set<std::string> test(f.test_subjects.begin(), f.test_subjects.end());
      for (const auto& s : f.test_subjects) CHECK(seen.insert(s).second);
      auto subject_of = [&](const std::string& id) { return id.substr(0, id.size() - 1); };
      for (const auto& id : f.train_faces) CHECK_FALSE(test.contains(subject_of(id)));
      for (const auto& id : f.train_skulls) CHECK_FALSE(test.contains(subject_of(id)));
      for (const auto& id : f.unlabeled) CHECK_FALSE(test.contains(id));
      for (const auto& id : f.probes) CHECK(id.back() == 's');
      for (std::size_t i = 0; i < f.train_faces.size(); ++i)
        CHECK(subject_of(f.train_faces[i]) == subject_of(f.train_skulls[i]));
    }
    CHECK(seen.size() == static_cast<std::size_t>(pairs));
    CHECK(hi - lo <= 1);
    const auto again = data::plan_folds(m, data::Protocol::P1, seed);
    CHECK(data::fold_plan_to_json(again) == data::fold_plan_to_json(plan));
  }
}

TEST_CASE("different seeds permute membership only") {
  const auto m = paired_manifest(35, 0, 0);
  const auto a = data::plan_folds(m, data::Protocol::P1, 1);
  const auto b = data::plan_folds(m, data::Protocol::P1, 2);
  bool differs = false;
  for (int f = 0; f < 5; ++f) {
    CHECK(a.folds[f].test_subjects.size() == b.folds[f].test_subjects.size());
    differs = differs || a.folds[f].test_subjects != b.folds[f].test_subjects;
  }
  CHECK(differs);
  const auto j = data::fold_plan_to_json(a);
  CHECK(j.at("protocol") == "P1");
  CHECK(j.at("seed") == 1);
  CHECK(j.at("folds").size() == 5);
}

TEST_CASE("synthetic corpus") {
  const auto c = data::synth_paired(5, 0.05, 3);
  CHECK(c.records.size() == 20);
  CHECK(data::count_pairs(c.records) == 5);
  CHECK(std::count_if(c.records.begin(), c.records.end(), [](const auto& r) { return !r.labeled; }) == 10);
  const auto again = data::synth_paired(5, 0.05, 3);
  CHECK(again.records == c.records);
  for (const auto& [id, img] : c.images) {
    CHECK(img.pixels == again.image(id).pixels);
    CHECK(img.height() == 64);
    CHECK(img.pixels.minCoeff() >= 0.0);
    CHECK(img.pixels.maxCoeff() <= 1.0);
  }
  CHECK_THROWS_AS(data::synth_paired(4, 0.05, 3), ArgumentError);

  const auto d = data::synth_distractors(4, 0.05, 3);
  CHECK(d.records.size() == 4);
  for (const auto& r : d.records) CHECK(r.extended_gallery);
  auto merged = c;
  data::merge_into(merged, d);
  CHECK(merged.records.size() == 24);
  CHECK_THROWS_AS(data::merge_into(merged, data::synth_distractors(1, 0.05, 3)), DataError);
}

TEST_CASE("synthetic skulls resemble their own faces") {
  const auto c = data::synth_paired(50, 0.05, 7);
  int good = 0;
  for (int i = 1; i <= 50; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%04d", i);
    const std::string s(buf);
    const auto& skull = c.image(s + "_skull").pixels;
    const double own = *data::ncc(skull, c.image(s + "_face").pixels);
    int beaten = 0;
    for (int j = 1; j <= 50; ++j) {
      if (j == i) continue;
      std::snprintf(buf, sizeof buf, "S%04d", j);
      if (own > *data::ncc(skull, c.image(std::string(buf) + "_face").pixels)) ++beaten;
    }
    if (beaten >= 0.9 * 49) ++good;
  }
  MESSAGE("skulls beating >= 90% of impostor faces: " << good << "/50");
  CHECK(good == 50);
}

TEST_CASE("corpus written to disk reloads identically") {
  testing::TempDir dir("corpus");
  const auto c = data::synth_paired(5, 0.05, 11);
  data::write_corpus(dir.path(), c);
  const auto back = data::load_corpus(dir / "manifest.json");
  CHECK(back.records == c.records);
  for (const auto& [id, img] : c.images) {
    CHECK((back.image(id).pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  }
  const std::string first = slurp(dir / "manifest.json");
  data::write_corpus(dir.path(), c);
  CHECK(slurp(dir / "manifest.json") == first);
}

}
