#include "diffo/coder.hpp"

#include <dlfcn.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "diffo/fast_coder_abi.h"

namespace diffo {

CoderKind parse_coder_kind(const std::string& name) {
  if (name == "auto") return CoderKind::automatic;
  if (name == "reference") return CoderKind::reference;
  if (name == "fast") return CoderKind::fast;
  throw ConfigError("unknown coder '" + name + "' (expected fast, reference or auto)");
}

std::vector<std::uint8_t> ReferenceCoder::encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  return encode_indices(symbols, pmf);
}

std::vector<std::int32_t> ReferenceCoder::decode(std::span<const std::uint8_t> payload, std::size_t count,
                                                 const PmfTable& pmf) {
  return decode_indices(payload, count, pmf);
}

namespace {

std::vector<std::uint16_t> narrow_freq(const PmfTable& pmf) {
  return {pmf.frequencies().begin(), pmf.frequencies().end()};
}

std::vector<std::uint16_t> narrow_symbols(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  std::vector<std::uint16_t> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] < 0 || symbols[i] >= pmf.size()) {
      throw CorruptionError("cannot encode symbol " + std::to_string(symbols[i]));
    }
    out[i] = static_cast<std::uint16_t>(symbols[i]);
  }
  return out;
}

[[noreturn]] void raise_status(int status, const std::string& who) {
  switch (status) {
    case DFO_INVALID_PMF:
      throw ConfigError(who + ": invalid PMF");
    case DFO_CORRUPT:
      throw CorruptionError(who + ": corrupt or truncated payload");
    case DFO_BAD_REQUEST:
      throw FormatError(who + ": bad request");
    default:
      throw Error(who + ": status " + std::to_string(status));
  }
}

}  // namespace

struct LibraryCoder::Impl {
  void* handle = nullptr;
  dfo_fast_encode_fn encode = nullptr;
  dfo_fast_decode_fn decode = nullptr;
};

LibraryCoder::LibraryCoder(const std::string& path) : path_(path), impl_(std::make_unique<Impl>()) {
  impl_->handle = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!impl_->handle) throw ConfigError("cannot load fast coder library " + path + ": " + dlerror());
  impl_->encode = reinterpret_cast<dfo_fast_encode_fn>(dlsym(impl_->handle, "dfo_fast_encode"));
  impl_->decode = reinterpret_cast<dfo_fast_decode_fn>(dlsym(impl_->handle, "dfo_fast_decode"));
  if (!impl_->encode || !impl_->decode) {
    dlclose(impl_->handle);
    throw ConfigError("fast coder library " + path + " lacks dfo_fast_encode/dfo_fast_decode");
  }
}

LibraryCoder::~LibraryCoder() {
  if (impl_ && impl_->handle) dlclose(impl_->handle);
}

std::vector<std::uint8_t> LibraryCoder::encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  const auto freq = narrow_freq(pmf);
  const auto sym = narrow_symbols(symbols, pmf);
  // Each symbol emits at most two bytes; the flush adds five plus any pending carry run.
  std::vector<std::uint8_t> out(2 * sym.size() + 16);
  for (;;) {
    std::uint64_t len = 0;
    const int status = impl_->encode(freq.data(), static_cast<std::uint32_t>(freq.size()), sym.data(), sym.size(),
                                     out.data(), out.size(), &len);
    if (status == DFO_BUFFER_TOO_SMALL) {
      out.resize(out.size() * 2);
      continue;
    }
    if (status != DFO_OK) raise_status(status, name());
    out.resize(len);
    return out;
  }
}

std::vector<std::int32_t> LibraryCoder::decode(std::span<const std::uint8_t> payload, std::size_t count,
                                               const PmfTable& pmf) {
  const auto freq = narrow_freq(pmf);
  std::vector<std::uint16_t> sym(count);
  const int status = impl_->decode(freq.data(), static_cast<std::uint32_t>(freq.size()), payload.data(),
                                   payload.size(), sym.data(), count);
  if (status != DFO_OK) raise_status(status, name());
  return {sym.begin(), sym.end()};
}

namespace frame {

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::write(fd, data, n);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("frame write failed: ") + std::strerror(errno));
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

// Returns bytes read; short only at EOF.
std::size_t read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::read(fd, data + got, n - got);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("frame read failed: ") + std::strerror(errno));
    }
    if (k == 0) break;
    got += static_cast<std::size_t>(k);
  }
  return got;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, static_cast<std::uint16_t>(v));
  put_u16(out, static_cast<std::uint16_t>(v >> 16));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return get_u16(p) | (static_cast<std::uint32_t>(get_u16(p + 2)) << 16);
}

}  // namespace

bool read(int fd, std::vector<std::uint8_t>& body) {
  std::uint8_t prefix[4];
  const std::size_t got = read_all(fd, prefix, 4);
  if (got == 0) return false;
  if (got < 4) throw FormatError("frame length prefix truncated");
  body.resize(get_u32(prefix));
  if (read_all(fd, body.data(), body.size()) != body.size()) throw FormatError("frame body truncated");
  return true;
}

void write(int fd, std::span<const std::uint8_t> body) {
  if (body.size() > 0xFFFFFFFFu) throw FormatError("frame exceeds 4 GiB");
  std::vector<std::uint8_t> prefix;
  put_u32(prefix, static_cast<std::uint32_t>(body.size()));
  write_all(fd, prefix.data(), prefix.size());
  write_all(fd, body.data(), body.size());
}

std::vector<std::uint8_t> pmf_frame(char op, const PmfTable& pmf) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(op));
  put_u16(out, static_cast<std::uint16_t>(pmf.size()));
  for (std::uint32_t f : pmf.frequencies()) put_u16(out, static_cast<std::uint16_t>(f));
  return out;
}

void serve(int in, int out, CoderBackend& coder) {
  std::vector<std::uint8_t> head, body;
  while (read(in, head)) {
    if (!read(in, body)) throw FormatError("request ended after the PMF frame");
    std::vector<std::uint8_t> response{ok};
    try {
      if (head.size() < 3) throw FormatError("short PMF frame");
      const char op = static_cast<char>(head[0]);
      const std::size_t k = get_u16(&head[1]);
      if (head.size() != 3 + 2 * k) throw FormatError("PMF frame length does not match K");
      std::vector<std::uint32_t> freq(k);
      for (std::size_t i = 0; i < k; ++i) freq[i] = get_u16(&head[3 + 2 * i]);
      const PmfTable pmf(std::move(freq));
      if (op == 'E') {
        if (body.size() % 2 != 0) throw FormatError("odd symbol frame");
        std::vector<std::int32_t> symbols(body.size() / 2);
        for (std::size_t i = 0; i < symbols.size(); ++i) symbols[i] = get_u16(&body[2 * i]);
        const auto payload = coder.encode(symbols, pmf);
        response.insert(response.end(), payload.begin(), payload.end());
      } else if (op == 'D') {
        if (body.size() < 4) throw FormatError("short decode frame");
        const std::uint32_t n = get_u32(body.data());
        const auto symbols = coder.decode(std::span(body).subspan(4), n, pmf);
        for (std::int32_t s : symbols) put_u16(response, static_cast<std::uint16_t>(s));
      } else {
        throw FormatError("unknown op");
      }
    } catch (const ConfigError&) {
      response.assign(1, invalid_pmf);
    } catch (const CorruptionError&) {
      response.assign(1, corrupt);
    } catch (const FormatError&) {
      response.assign(1, bad_request);
    }
    write(out, response);
  }
}

}  // namespace frame

ProcessCoder::ProcessCoder(const std::string& executable) : path_(executable) {
  // A dead child must surface as a write error, not kill this process.
  ::signal(SIGPIPE, SIG_IGN);
  int down[2];
  int up[2];
  if (::pipe(down) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(up) != 0) {
    ::close(down[0]);
    ::close(down[1]);
    throw Error(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = ::fork();
  if (pid_ < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(down[0], STDIN_FILENO);
    ::dup2(up[1], STDOUT_FILENO);
    ::close(down[0]);
    ::close(down[1]);
    ::close(up[0]);
    ::close(up[1]);
    ::execl(executable.c_str(), executable.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(down[0]);
  ::close(up[1]);
  to_child_ = down[1];
  from_child_ = up[0];
}

ProcessCoder::~ProcessCoder() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::vector<std::uint8_t> ProcessCoder::call(const std::vector<std::uint8_t>& pmf_frame,
                                             const std::vector<std::uint8_t>& body) {
  std::vector<std::uint8_t> response;
  try {
    frame::write(to_child_, pmf_frame);
    frame::write(to_child_, body);
    if (!frame::read(from_child_, response)) throw Error("no response");
  } catch (const Error& e) {
    throw Error("fast coder process " + path_ + " failed: " + e.what());
  }
  if (response.empty()) throw FormatError("fast coder process sent an empty response");
  if (response[0] != frame::ok) raise_status(response[0], name());
  response.erase(response.begin());
  return response;
}

std::vector<std::uint8_t> ProcessCoder::encode(std::span<const std::int32_t> symbols, const PmfTable& pmf) {
  const auto sym = narrow_symbols(symbols, pmf);
  std::vector<std::uint8_t> body;
  body.reserve(2 * sym.size());
  for (std::uint16_t s : sym) frame::put_u16(body, s);
  return call(frame::pmf_frame('E', pmf), body);
}

std::vector<std::int32_t> ProcessCoder::decode(std::span<const std::uint8_t> payload, std::size_t count,
                                               const PmfTable& pmf) {
  if (count > 0xFFFFFFFFu) throw FormatError("symbol count exceeds the protocol limit");
  std::vector<std::uint8_t> body;
  frame::put_u32(body, static_cast<std::uint32_t>(count));
  body.insert(body.end(), payload.begin(), payload.end());
  const auto data = call(frame::pmf_frame('D', pmf), body);
  if (data.size() != 2 * count) throw FormatError("fast coder process returned the wrong symbol count");
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = frame::get_u16(&data[2 * i]);
  return out;
}

std::unique_ptr<CoderBackend> make_coder(CoderKind kind) {
  if (kind == CoderKind::reference) return std::make_unique<ReferenceCoder>();
  const char* lib = std::getenv(kFastCoderLibEnv);
  const char* bin = std::getenv(kFastCoderBinEnv);
  try {
    if (lib && *lib) return std::make_unique<LibraryCoder>(lib);
    if (bin && *bin) {
      if (::access(bin, X_OK) != 0) throw ConfigError(std::string("fast coder executable not runnable: ") + bin);
      return std::make_unique<ProcessCoder>(bin);
    }
  } catch (const ConfigError&) {
    if (kind == CoderKind::fast) throw;
    return std::make_unique<ReferenceCoder>();
  }
  if (kind == CoderKind::fast) {
    throw ConfigError(std::string("no fast coder configured; set ") + kFastCoderLibEnv + " or " + kFastCoderBinEnv);
  }
  return std::make_unique<ReferenceCoder>();
}

}  // namespace diffo
