#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "metaoth/datagen.hpp"
#include "test_util.hpp"

using namespace metaoth;

TEST_CASE("classic sequences open with one of the four legal moves") {
  const auto spec = make_spec(GameId::Classic);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto rec = sample_sequence(spec, seed);
    REQUIRE(rec.length() > 0);
    const int first = rec.tokens[0];
    CHECK((first == 19 || first == 26 || first == 37 || first == 44));
  }
}

TEST_CASE("sampled sequences replay under their own game and respect the cap") {
  for (GameId g : {GameId::Classic, GameId::NoMidFlip, GameId::DelFlank, GameId::Iago}) {
    const auto spec = make_spec(g);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto rec = sample_sequence(spec, seed);
      CHECK(rec.length() <= kMaxPlacements);
      CHECK(replay(spec, rec.tokens).has_value());
    }
  }
  const auto short_rec = sample_sequence(make_spec(GameId::Classic), 3, 10);
  CHECK(short_rec.length() == 10);
}

TEST_CASE("delflank games reach the cap more often than classic") {
  int capped_classic = 0, capped_del = 0;
  const auto classic = make_spec(GameId::Classic);
  const auto del = make_spec(GameId::DelFlank);
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    capped_classic += sample_sequence(classic, seed).length() == kMaxPlacements;
    capped_del += sample_sequence(del, seed).length() == kMaxPlacements;
  }
  CHECK(capped_del > capped_classic);
}

TEST_CASE("first-move distribution is uniform over the opening set") {
  const auto spec = make_spec(GameId::Classic);
  std::map<int, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample_sequence(spec, derive_seed(11, i), 1).tokens[0]];
  REQUIRE(counts.size() == 4);
  double chi2 = 0.0;
  for (const auto& [tok, c] : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  // 3 degrees of freedom, p = 0.001
  CHECK(chi2 < 16.266);
}

TEST_CASE("dataset round trip and determinism") {
  test::TempDir dir;
  const std::vector<GameId> mix{GameId::Classic, GameId::NoMidFlip};
  const auto manifest = DatasetManifest::uniform_mix(mix, 1000, 5);
  generate_dataset(manifest, dir / "a.mob", 1);
  generate_dataset(manifest, dir / "b.mob", 3);
  CHECK(test::read_bytes(dir / "a.mob") == test::read_bytes(dir / "b.mob"));

  const auto ds = read_dataset(dir / "a.mob");
  REQUIRE(ds.records.size() == 1000);
  CHECK(ds.records == generate_records(manifest, 2));
  CHECK(ds.manifest.count == 1000);
  REQUIRE(ds.manifest.game_mix.size() == 2);
  CHECK(ds.manifest.game_mix[0].second == doctest::Approx(0.5));

  std::size_t n_classic = 0;
  for (const auto& r : ds.records) n_classic += r.game == GameId::Classic;
  // 3 sigma of Binomial(1000, 0.5)
  CHECK(std::abs(static_cast<double>(n_classic) - 500.0) < 3.0 * std::sqrt(250.0));
  const auto specs = ds.manifest.specs();
  for (const auto& r : ds.records) {
    const auto& spec = specs[r.game == GameId::Classic ? 0 : 1];
    CHECK(replay(spec, r.tokens).has_value());
  }
}

TEST_CASE("pure dataset carries one game") {
  test::TempDir dir;
  const std::vector<GameId> one{GameId::Classic};
  generate_dataset(DatasetManifest::uniform_mix(one, 1000, 7), dir / "c.mob");
  const auto ds = read_dataset(dir / "c.mob");
  CHECK(ds.records.size() == 1000);
  for (const auto& r : ds.records) CHECK(r.game == GameId::Classic);
}

TEST_CASE("corrupt containers are rejected") {
  test::TempDir dir;
  const std::vector<GameId> one{GameId::Classic};
  generate_dataset(DatasetManifest::uniform_mix(one, 50, 1), dir / "ok.mob");
  auto bytes = test::read_bytes(dir / "ok.mob");

  test::write_bytes(dir / "trunc.mob", std::string(bytes.begin(), bytes.end() - 7));
  CHECK_THROWS_AS(read_dataset(dir / "trunc.mob"), CorruptFile);

  auto magic = bytes;
  magic[0] = 'X';
  test::write_bytes(dir / "magic.mob", magic);
  CHECK_THROWS_AS(read_dataset(dir / "magic.mob"), CorruptFile);

  auto version = bytes;
  version[7] = '9';
  test::write_bytes(dir / "version.mob", version);
  CHECK_THROWS_AS(read_dataset(dir / "version.mob"), VersionMismatch);

  CHECK_THROWS(read_dataset(dir / "missing.mob"));
}

TEST_CASE("manifest validation and json") {
  DatasetManifest m;
  m.game_mix = {{GameId::Classic, 0.7}, {GameId::DelFlank, 0.2}};
  CHECK_THROWS(m.validate());
  m.game_mix = {{GameId::Classic, 0.5}, {GameId::Iago, 0.5}};
  m.count = 3;
  m.spec_options.iago_seed = 9;
  const auto back = manifest_from_json(manifest_to_json(m));
  CHECK(back.game_mix == m.game_mix);
  CHECK(back.count == 3);
  CHECK(back.spec_options.iago_seed == 9);
  CHECK(back.specs()[1].syntax == SyntaxMap::derangement(9));
}

TEST_CASE("jsonl export") {
  std::vector<SequenceRecord> recs{{GameId::NoMidFlip, {19, 18}}};
  std::ostringstream out;
  export_jsonl(recs, out);
  CHECK(out.str() == "{\"game\":\"nomidflip\",\"tokens\":[19,18]}\n");
}
