#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cuelab {

// Bad input (config, arguments, file contents). Maps to exit code 1 / CLB_E_ARG.
struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Broken internal assumption or runtime failure. Maps to exit code 2 / CLB_E_INTERNAL.
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- seeding ---------------------------------------------------------------
//
// All randomness in a run flows from one master seed. Independent streams are
// derived by mixing the seed with a purpose tag and an index, so parallel jobs
// draw from disjoint, order-independent streams.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index);
}

inline std::mt19937_64 rng_stream(uint64_t seed, uint64_t tag, uint64_t index = 0) {
  return std::mt19937_64(mix_seed(seed, tag, index));
}

// Stable string -> tag for stream derivation and config hashing.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v);

// --- parallelism -----------------------------------------------------------

// Number of worker threads for job-level parallelism (0 = hardware count).
int default_jobs();

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index must write
// only its own output slot; results are then independent of scheduling.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn, int jobs = 0);

// --- formatting / io -------------------------------------------------------

// Fixed float formatting so identical values always serialize to identical
// bytes (reruns must produce byte-identical CSV payloads).
std::string fmt_g(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Minimal CSV emitter: comment lines, header, rows of preformatted cells.
class CsvWriter {
 public:
  void comment(std::string_view line);
  void header(const std::vector<std::string>& cols);
  void row(const std::vector<std::string>& cells);
  const std::string& str() const { return buf_; }
  void save(const std::filesystem::path& path) const { write_file(path, buf_); }

 private:
  std::string buf_;
};

}  // namespace cuelab
