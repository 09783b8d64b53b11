#pragma once

// Uniform-random-play sequence sampling and the ".mob" dataset container.
//
// Container layout (little-endian):
//   "METAOTH1"                      8-byte magic, last byte is the format version
//   u32 manifest_len, manifest      JSON text
//   records                         [u16 length][u8 game_id][length x u8 token]
// Only placement tokens are stored; pad and skip never appear in a file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metaoth/game.hpp"
#include "metaoth/rng.hpp"

namespace metaoth {

class CorruptFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SequenceRecord {
  GameId game = GameId::Classic;
  std::vector<Token> tokens;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const SequenceRecord&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::vector<std::pair<GameId, double>> game_mix{{GameId::Classic, 1.0}};
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  int max_len = kMaxPlacements;
  SpecOptions spec_options;

  // Equal-weight mixture over the given games.
  static DatasetManifest uniform_mix(std::span<const GameId> games, std::uint64_t count,
                                     std::uint64_t seed);

  void validate() const;
  std::vector<GameSpec> specs() const;
  std::vector<double> priors() const;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

// Plays uniformly random legal moves from the initial board until terminal.
SequenceRecord sample_sequence(const GameSpec& spec, Rng& rng, int max_len = kMaxPlacements);
SequenceRecord sample_sequence(const GameSpec& spec, std::uint64_t seed,
                               int max_len = kMaxPlacements);

// Record `index` of a dataset is a pure function of (manifest, index), so
// output bytes do not depend on the worker count.
SequenceRecord generate_record(const DatasetManifest& manifest, std::span<const GameSpec> specs,
                               std::uint64_t index);

std::vector<SequenceRecord> generate_records(const DatasetManifest& manifest, int threads = 1);

// Writes the container; throws std::runtime_error on IO failure.
void generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& out_path,
                      int threads = 1);

void write_dataset(const DatasetManifest& manifest, std::span<const SequenceRecord> records,
                   const std::filesystem::path& out_path);

class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  const DatasetManifest& manifest() const { return manifest_; }
  // Next record, or nullopt after the last one. Throws CorruptFile on
  // truncation or on a record count that disagrees with the manifest.
  std::optional<SequenceRecord> next();

 private:
  std::ifstream in_;
  DatasetManifest manifest_;
  std::uint64_t read_ = 0;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SequenceRecord> records;
};

Dataset read_dataset(const std::filesystem::path& path);

// One {"game": "...", "tokens": [...]} object per line.
void export_jsonl(std::span<const SequenceRecord> records, std::ostream& out);

}  // namespace metaoth
