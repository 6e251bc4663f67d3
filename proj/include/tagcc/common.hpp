#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace tagcc {

// Invalid configuration, malformed inputs, violated preconditions. CLI exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Remote endpoint unreachable or misbehaving after all retries. CLI exit code 2.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during optimization. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);
std::string to_hex(std::uint64_t v);

// 16-char hex FNV-1a digest of a string.
std::string hash_hex(const std::string& s);

// Derives an independent seed for a sub-stream (per epoch, per parameter, ...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic platform-independent RNG (splitmix64 core). std:: distributions
// are implementation-defined, so all sampling goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double next_double();    // [0, 1)
  double next_gaussian();  // Box-Muller
  std::size_t next_index(std::size_t bound);  // [0, bound); bound > 0

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_index(i)]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string getenv_or(const std::string& name, const std::string& fallback = "");

}  // namespace tagcc
