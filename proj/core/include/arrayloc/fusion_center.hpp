#pragma once

// Fusion-center ingestion: per-array DOA records arrive as text lines over a
// socket or from capture files, are kept in append-only per-array logs with
// an in-memory index, and are binned and joined by timestamp into
// concatenated observations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "arrayloc/fusion.hpp"

namespace arrayloc {

/// One line of the wire protocol: `ts_ms,array_id,dx,dy,dz,energy,seq`.
struct WireRecord {
  std::int64_t timestamp_ms = 0;
  int array_id = 0;
  double dx = 0.0;
  double dy = 0.0;
  double dz = 1.0;
  double energy = 0.0;
  std::uint64_t seq = 0;

  Vec3 direction() const { return {dx, dy, dz}; }
  friend bool operator==(const WireRecord&, const WireRecord&) = default;
};

inline constexpr double kWireNormTolerance = 1e-3;

/// Parses and validates one line (no trailing newline; a trailing '\r' is
/// ignored). Rejects wrong field counts, unparsable numbers, negative array
/// ids, |d| off unit by more than 1e-3 and dz < -1e-3. On success the
/// direction is renormalized with dz clamped to >= 0.
std::optional<WireRecord> parse_wire_line(std::string_view line, std::string* error = nullptr);

/// Canonical text form (17 significant digits), no newline.
std::string format_wire_line(const WireRecord& record);

struct IngestCounters {
  std::uint64_t received = 0;  ///< complete lines offered to the store
  std::uint64_t ingested = 0;
  std::uint64_t rejected = 0;
  std::uint64_t duplicates = 0;             ///< same (array, ts) seen again; last wins
  std::uint64_t conflicting_duplicates = 0;  ///< duplicates whose payload differs
  std::uint64_t sequence_gaps = 0;          ///< missing seq numbers per array
  std::uint64_t partial_lines = 0;          ///< unterminated lines at disconnect
};

/// Half-open [begin_ms, end_ms) over bin start times.
struct TimeRange {
  std::int64_t begin_ms = std::numeric_limits<std::int64_t>::min();
  std::int64_t end_ms = std::numeric_limits<std::int64_t>::max();

  static TimeRange all() { return {}; }
};

struct JoinOptions {
  std::int64_t bin_ms = 64;
  /// Per-array clock offsets (array clock minus reference clock), subtracted
  /// from record timestamps before binning. Must lie within +-jitter_ms.
  std::map<int, std::int64_t> clock_offset_ms;
  std::int64_t jitter_ms = 10;
};

struct JoinedRow {
  std::int64_t bin_start_ms = 0;
  ConcatenatedDoa doa;  ///< timestamp_ms equals bin_start_ms
};

/// Bin index for a corrected timestamp: floor(ts / bin_ms). Bins are aligned
/// to multiples of bin_ms, which coincides with rounding the earliest record
/// down to the bin size.
std::int64_t bin_index(std::int64_t timestamp_ms, std::int64_t bin_ms);

class DoaStore {
 public:
  /// In-memory store for `arrays` arrays (ids 0..arrays-1).
  explicit DoaStore(std::size_t arrays = 5);
  /// Persistent store backed by `directory/array_<id>.log`. Existing logs are
  /// replayed to rebuild the index.
  DoaStore(const std::filesystem::path& directory, std::size_t arrays = 5);
  ~DoaStore();

  DoaStore(const DoaStore&) = delete;
  DoaStore& operator=(const DoaStore&) = delete;

  /// Parses and stores one line. Malformed lines are counted and skipped.
  bool ingest_line(std::string_view line);
  /// Stores an already-parsed record (validated again).
  bool ingest(const WireRecord& record);
  /// Ingests every line of a capture stream; returns lines accepted.
  std::size_t ingest_stream(std::istream& in);
  void note_partial_line();

  /// Bins each array's records, averages per bin and joins arrays by bin.
  /// Arrays without a record in a bin are inactive; bins with no active
  /// array are omitted. Throws InvalidArgument for an inverted range,
  /// bin_ms <= 0 or an offset beyond jitter_ms.
  std::vector<JoinedRow> join_bins(TimeRange range, const JoinOptions& options = {}) const;

  /// join_bins with the store's default options.
  std::vector<JoinedRow> query(TimeRange range = TimeRange::all()) const;

  void set_default_join_options(JoinOptions options);

  IngestCounters counters() const;
  std::vector<WireRecord> records(int array_id) const;
  std::size_t record_count() const;
  std::size_t arrays() const { return arrays_; }
  std::optional<std::filesystem::path> directory() const { return directory_; }

  void flush();

 private:
  bool store_locked(const WireRecord& record);

  std::size_t arrays_;
  std::optional<std::filesystem::path> directory_;
  mutable std::shared_mutex mutex_;
  std::vector<std::map<std::int64_t, WireRecord>> index_;
  std::vector<std::optional<std::uint64_t>> last_seq_;
  std::vector<std::unique_ptr<std::ofstream>> logs_;
  IngestCounters counters_;
  JoinOptions default_join_;
};

/// Wire records for one concatenated observation (one per active array).
/// `seq` holds the per-array counters and is advanced.
std::vector<WireRecord> to_wire_records(const ConcatenatedDoa& d, std::vector<std::uint64_t>& seq,
                                        double energy = 10.0);

}  // namespace arrayloc
