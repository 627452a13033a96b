// SPDX-License-Identifier: Apache-2.0
#include "fishmask/io.hpp"

#include <sstream>

#include "fishmask/errors.hpp"

namespace fishmask::io {

void ChecksummedReader::read_raw(void* data, std::size_t n) {
  is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is_.gcount()) != n) {
    throw DataError(path_ + ": truncated read of " + std::to_string(n) +
                    " bytes at offset " + std::to_string(offset_));
  }
  hash_ = fnv1a(data, n, hash_);
  offset_ += n;
}

void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& fill) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp + " for writing");
    fill(os);
    os.flush();
    if (!os) throw DataError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace fishmask::io
