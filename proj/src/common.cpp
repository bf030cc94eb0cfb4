#include "sot/error.hpp"
#include "sot/rational.hpp"
#include "sot/rng.hpp"
#include "sot/utf8.hpp"

#include <charconv>
#include <numeric>

namespace sot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ballot_rejected: return "ballot_rejected";
    case ErrorCode::input_error: return "input_error";
    case ErrorCode::size_error: return "size_error";
    case ErrorCode::lifecycle_error: return "lifecycle_error";
    case ErrorCode::validation_error: return "validation_error";
    case ErrorCode::relationship_error: return "relationship_error";
    case ErrorCode::idempotency_error: return "idempotency_error";
    case ErrorCode::self_view_error: return "self_view_error";
    case ErrorCode::unsupported_arity: return "unsupported_arity";
    case ErrorCode::stale_phase: return "stale_phase";
    case ErrorCode::not_in_roster: return "not_in_roster";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::unknown_session: return "unknown_session";
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::session_aborted: return "session_aborted";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(ErrorCode::input_error, "rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  num_ = g == 0 ? 0 : num / g;
  den_ = g == 0 ? 1 : den / g;
}

Rational operator+(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_);
}

Rational operator*(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.num_, a.den_ * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
  return Rational(a.num_ * b.den_, a.den_ * b.num_);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  __extension__ using Wide = __int128;
  const Wide lhs = static_cast<Wide>(a.num_) * b.den_;
  const Wide rhs = static_cast<Wide>(b.num_) * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::parse(std::string_view text) {
  auto parse_int = [&](std::string_view part) {
    std::int64_t value = 0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, value);
    if (ec != std::errc() || ptr != end || part.empty()) {
      throw Error(ErrorCode::malformed, "bad rational '" + std::string(text) + "'");
    }
    return value;
  };
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return Rational(parse_int(text));
  return Rational(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
}

// ---------------------------------------------------------------------------
// Rng

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a(purpose)) + index);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::input_error, "Rng::below(0)");
  // Rejection sampling keeps the result identical across standard libraries,
  // unlike std::uniform_int_distribution.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % bound;
  }
}

bool Rng::bernoulli(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  const std::uint64_t draw = engine_() >> 11;  // 53 bits
  return static_cast<double>(draw) < p * 9007199254740992.0;
}

}  // namespace sot

// ---------------------------------------------------------------------------
// UTF-8

namespace sot::utf8 {

std::u32string decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  auto fail = [] { throw Error(ErrorCode::validation_error, "text is not valid UTF-8"); };
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      fail();
    }
    if (extra > 0 && i + extra >= text.size()) fail();
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto c = static_cast<unsigned char>(text[i + k]);
      if ((c & 0xC0) != 0x80) fail();
      cp = (cp << 6) | (c & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail();
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::size_t length(std::string_view text) { return decode(text).size(); }

}  // namespace sot::utf8
