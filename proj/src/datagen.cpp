#include "metaoth/datagen.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>
#include <thread>

#include <json.hpp>

namespace metaoth {
namespace {

constexpr std::array<char, 7> kMagicPrefix{'M', 'E', 'T', 'A', 'O', 'T', 'H'};
constexpr char kFormatVersion = '1';

using nlohmann::json;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) return false;
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  value = static_cast<T>(v);
  return true;
}

}  // namespace

DatasetManifest DatasetManifest::uniform_mix(std::span<const GameId> games, std::uint64_t count,
                                             std::uint64_t seed) {
  DatasetManifest m;
  m.game_mix.clear();
  for (GameId g : games) m.game_mix.emplace_back(g, 1.0 / static_cast<double>(games.size()));
  m.count = count;
  m.seed = seed;
  return m;
}

void DatasetManifest::validate() const {
  if (game_mix.empty()) throw std::invalid_argument("manifest has no games");
  double total = 0.0;
  for (const auto& [g, p] : game_mix) {
    if (!(p >= 0.0)) throw std::invalid_argument("negative game prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("game priors must sum to 1");
  if (max_len <= 0 || max_len > kMaxPlacements) throw std::invalid_argument("max_len out of range");
}

std::vector<GameSpec> DatasetManifest::specs() const {
  std::vector<GameSpec> out;
  for (const auto& [g, p] : game_mix) out.push_back(make_spec(g, spec_options));
  return out;
}

std::vector<double> DatasetManifest::priors() const {
  std::vector<double> out;
  for (const auto& [g, p] : game_mix) out.push_back(p);
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["version"] = m.version;
  j["count"] = m.count;
  j["seed"] = m.seed;
  j["max_len"] = m.max_len;
  json mix = json::array();
  for (const auto& [g, p] : m.game_mix) mix.push_back({{"game", game_name(g)}, {"prior", p}});
  j["game_mix"] = mix;
  j["iago_seed"] = m.spec_options.iago_seed;
  j["delflank_black"] = m.spec_options.delflank_black;
  j["delflank_white"] = m.spec_options.delflank_white;
  j["delflank_adjacency"] =
      m.spec_options.delflank_adjacency == Adjacency::Moore ? "moore" : "von_neumann";
  return j.dump();
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<int>();
    m.count = j.at("count").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.max_len = j.value("max_len", kMaxPlacements);
    m.game_mix.clear();
    for (const auto& e : j.at("game_mix")) {
      m.game_mix.emplace_back(parse_game(e.at("game").get<std::string>()), e.at("prior").get<double>());
    }
    m.spec_options.iago_seed = j.value("iago_seed", m.spec_options.iago_seed);
    if (j.contains("delflank_black")) m.spec_options.delflank_black = j["delflank_black"].get<std::vector<int>>();
    if (j.contains("delflank_white")) m.spec_options.delflank_white = j["delflank_white"].get<std::vector<int>>();
    if (j.value("delflank_adjacency", std::string("moore")) != "moore") {
      m.spec_options.delflank_adjacency = Adjacency::VonNeumann;
    }
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("bad manifest: ") + e.what());
  }
  return m;
}

SequenceRecord sample_sequence(const GameSpec& spec, Rng& rng, int max_len) {
  SequenceRecord rec;
  rec.game = spec.id;
  GameState state(spec);
  while (!state.terminal() && rec.length() < max_len) {
    std::uint64_t moves = state.next_placements();
    auto pick = rng.below(static_cast<std::uint64_t>(std::popcount(moves)));
    for (; pick > 0; --pick) moves &= moves - 1;
    const int index = std::countr_zero(moves);
    state.play(Move::place(index));
    rec.tokens.push_back(static_cast<Token>(spec.syntax.to_token(index)));
  }
  return rec;
}

SequenceRecord sample_sequence(const GameSpec& spec, std::uint64_t seed, int max_len) {
  Rng rng(seed);
  return sample_sequence(spec, rng, max_len);
}

SequenceRecord generate_record(const DatasetManifest& manifest, std::span<const GameSpec> specs,
                               std::uint64_t index) {
  Rng rng(derive_seed(manifest.seed, index));
  std::size_t g = 0;
  if (specs.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (g = 0; g + 1 < specs.size(); ++g) {
      acc += manifest.game_mix[g].second;
      if (u < acc) break;
    }
  }
  return sample_sequence(specs[g], rng, manifest.max_len);
}

std::vector<SequenceRecord> generate_records(const DatasetManifest& manifest, int threads) {
  manifest.validate();
  const auto specs = manifest.specs();
  std::vector<SequenceRecord> records(manifest.count);
  const auto n_workers = static_cast<std::uint64_t>(std::max(1, threads));
  if (n_workers == 1) {
    for (std::uint64_t i = 0; i < manifest.count; ++i) records[i] = generate_record(manifest, specs, i);
    return records;
  }
  std::vector<std::thread> workers;
  for (std::uint64_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&, w] {
      for (std::uint64_t i = w; i < manifest.count; i += n_workers) {
        records[i] = generate_record(manifest, specs, i);
      }
    });
  }
  for (auto& t : workers) t.join();
  return records;
}

void write_dataset(const DatasetManifest& manifest, std::span<const SequenceRecord> records,
                   const std::filesystem::path& out_path) {
  if (records.size() != manifest.count) {
    throw std::invalid_argument("record count does not match manifest");
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + out_path.string() + " for writing");
  out.write(kMagicPrefix.data(), kMagicPrefix.size());
  out.put(kFormatVersion);
  const std::string text = manifest_to_json(manifest);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& r : records) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.tokens.size()));
    out.put(static_cast<char>(r.game));
    out.write(reinterpret_cast<const char*>(r.tokens.data()), static_cast<std::streamsize>(r.tokens.size()));
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + out_path.string());
}

void generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& out_path,
                      int threads) {
  // Generated in bounded chunks so memory stays flat for very large counts.
  manifest.validate();
  const auto specs = manifest.specs();
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + out_path.string() + " for writing");
  out.write(kMagicPrefix.data(), kMagicPrefix.size());
  out.put(kFormatVersion);
  const std::string text = manifest_to_json(manifest);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  constexpr std::uint64_t kChunk = 1 << 16;
  const auto n_workers = static_cast<std::uint64_t>(std::max(1, threads));
  std::vector<SequenceRecord> chunk;
  for (std::uint64_t begin = 0; begin < manifest.count; begin += kChunk) {
    const std::uint64_t n = std::min(kChunk, manifest.count - begin);
    chunk.assign(n, {});
    auto work = [&](std::uint64_t w) {
      for (std::uint64_t i = w; i < n; i += n_workers) chunk[i] = generate_record(manifest, specs, begin + i);
    };
    if (n_workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> workers;
      for (std::uint64_t w = 0; w < n_workers; ++w) workers.emplace_back(work, w);
      for (auto& t : workers) t.join();
    }
    for (const auto& r : chunk) {
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.tokens.size()));
      out.put(static_cast<char>(r.game));
      out.write(reinterpret_cast<const char*>(r.tokens.data()), static_cast<std::streamsize>(r.tokens.size()));
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + out_path.string());
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in_.read(magic.data(), magic.size());
  if (in_.gcount() != 8 || std::memcmp(magic.data(), kMagicPrefix.data(), kMagicPrefix.size()) != 0) {
    throw CorruptFile("bad magic in " + path.string());
  }
  if (magic[7] != kFormatVersion) {
    throw VersionMismatch("unsupported container version '" + std::string(1, magic[7]) + "'");
  }
  std::uint32_t len = 0;
  if (!get_le(in_, len)) throw CorruptFile("truncated header");
  std::string text(len, '\0');
  in_.read(text.data(), len);
  if (in_.gcount() != static_cast<std::streamsize>(len)) throw CorruptFile("truncated manifest");
  manifest_ = manifest_from_json(text);
  if (manifest_.version != 1) {
    throw VersionMismatch("unsupported manifest version " + std::to_string(manifest_.version));
  }
}

std::optional<SequenceRecord> DatasetReader::next() {
  std::uint16_t len = 0;
  if (!get_le(in_, len)) {
    if (read_ != manifest_.count) {
      throw CorruptFile("expected " + std::to_string(manifest_.count) + " records, found " +
                        std::to_string(read_));
    }
    return std::nullopt;
  }
  if (read_ >= manifest_.count) throw CorruptFile("trailing data after last record");
  const int game = in_.get();
  if (game < 0) throw CorruptFile("truncated record");
  if (game >= kNumGames) throw CorruptFile("bad game id " + std::to_string(game));
  if (len > kMaxPlacements) throw CorruptFile("record longer than 60 tokens");
  SequenceRecord rec;
  rec.game = static_cast<GameId>(game);
  rec.tokens.resize(len);
  in_.read(reinterpret_cast<char*>(rec.tokens.data()), len);
  if (in_.gcount() != len) throw CorruptFile("truncated record");
  for (Token t : rec.tokens) {
    if (t >= kBoardTiles) throw CorruptFile("non-placement token in record");
  }
  ++read_;
  return rec;
}

Dataset read_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  Dataset ds;
  ds.manifest = reader.manifest();
  ds.records.reserve(ds.manifest.count);
  while (auto r = reader.next()) ds.records.push_back(std::move(*r));
  return ds;
}

void export_jsonl(std::span<const SequenceRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    json j;
    j["game"] = game_name(r.game);
    std::vector<int> toks(r.tokens.begin(), r.tokens.end());
    j["tokens"] = toks;
    out << j.dump() << '\n';
  }
}

}  // namespace metaoth
