#include "spainmob/gzip.hpp"

#include "spainmob/error.hpp"

namespace spainmob {

GzipFileReader::GzipFileReader(const std::filesystem::path& path, std::size_t buffer_size)
    : path_(path), in_(buffer_size) {
  file_ = std::fopen(path.c_str(), "rb");
  if (!file_) fail(Errc::Io, "cannot open " + path.string());
  if (inflateInit2(&zs_, 16 + MAX_WBITS) != Z_OK) {
    std::fclose(file_);
    fail(Errc::GzipCorrupt, "inflateInit2 failed");
  }
}

GzipFileReader::~GzipFileReader() {
  inflateEnd(&zs_);
  if (file_) std::fclose(file_);
}

std::size_t GzipFileReader::read(char* out, std::size_t n) {
  if (eof_ || n == 0) return 0;
  zs_.next_out = reinterpret_cast<Bytef*>(out);
  zs_.avail_out = static_cast<uInt>(n);
  while (zs_.avail_out > 0) {
    if (zs_.avail_in == 0) {
      const std::size_t got = std::fread(in_.data(), 1, in_.size(), file_);
      if (got == 0) {
        if (std::ferror(file_)) fail(Errc::Io, "read error on " + path_.string());
        if (member_open_) fail(Errc::GzipCorrupt, path_.string() + ": truncated gzip stream");
        if (!any_input_) fail(Errc::GzipCorrupt, path_.string() + ": empty file is not a gzip stream");
        eof_ = true;
        break;
      }
      any_input_ = true;
      zs_.next_in = in_.data();
      zs_.avail_in = static_cast<uInt>(got);
    }
    member_open_ = true;
    const int rc = inflate(&zs_, Z_NO_FLUSH);
    if (rc == Z_STREAM_END) {
      member_open_ = false;
      inflateReset(&zs_);
      continue;
    }
    if (rc == Z_BUF_ERROR) {
      if (zs_.avail_in == 0) continue;
      break;
    }
    if (rc != Z_OK) {
      fail(Errc::GzipCorrupt, path_.string() + ": " + (zs_.msg ? zs_.msg : "inflate error"));
    }
  }
  return n - zs_.avail_out;
}

std::string gzip_compress(std::string_view data, int level) {
  z_stream zs{};
  if (deflateInit2(&zs, level, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    fail(Errc::Io, "deflateInit2 failed");
  gz_header header{};
  header.os = 3;
  deflateSetHeader(&zs, &header);
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(data.size())) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  if (rc != Z_STREAM_END) {
    deflateEnd(&zs);
    fail(Errc::Io, "deflate failed");
  }
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) fail(Errc::GzipCorrupt, "inflateInit2 failed");
  std::string out;
  char buf[1 << 15];
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  bool ended = data.empty();
  while (zs.avail_in > 0) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    const int rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf, sizeof buf - zs.avail_out);
    if (rc == Z_STREAM_END) {
      ended = true;
      if (zs.avail_in == 0) break;
      inflateReset(&zs);
      ended = false;
      continue;
    }
    if (rc != Z_OK) {
      inflateEnd(&zs);
      fail(Errc::GzipCorrupt, zs.msg ? zs.msg : "inflate error");
    }
  }
  inflateEnd(&zs);
  if (!ended) fail(Errc::GzipCorrupt, "truncated gzip stream");
  return out;
}

}  // namespace spainmob
