#pragma once

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spainmob {

// Streaming reader for gzip files, including multi-member files. Throws
// GzipCorrupt on bad headers, bad data, or a stream truncated mid-member.
class GzipFileReader {
 public:
  explicit GzipFileReader(const std::filesystem::path& path, std::size_t buffer_size = 1 << 16);
  ~GzipFileReader();
  GzipFileReader(const GzipFileReader&) = delete;
  GzipFileReader& operator=(const GzipFileReader&) = delete;

  // Fills up to `n` bytes; returns 0 only at a clean end of stream.
  std::size_t read(char* out, std::size_t n);

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  z_stream zs_{};
  std::vector<unsigned char> in_;
  bool member_open_ = false;
  bool eof_ = false;
  bool any_input_ = false;
};

// Deterministic gzip (mtime 0, no file name).
std::string gzip_compress(std::string_view data, int level = 6);
std::string gzip_decompress(std::string_view data);

}  // namespace spainmob
