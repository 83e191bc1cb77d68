#include "devmine/timestamp.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <chrono>

#include "devmine/error.hpp"

namespace devmine {
namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  int digits(std::size_t count) {
    if (pos_ + count > text_.size()) fail();
    int value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + pos_ + count, value);
    if (ec != std::errc{} || ptr != text_.data() + pos_ + count) fail();
    pos_ += count;
    return value;
  }

  void expect(char c) {
    if (!accept(c)) fail();
  }

  bool accept(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool at_digit() const {
    return pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]));
  }

  bool done() const { return pos_ == text_.size(); }

  [[noreturn]] void fail() const {
    throw InputError(fmt::format("malformed timestamp '{}'", text_));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
    text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
    text.remove_suffix(1);

  Cursor in(text);
  const int year = in.digits(4);
  in.expect('-');
  const int month = in.digits(2);
  in.expect('-');
  const int day = in.digits(2);
  if (!in.accept(' ')) in.expect('T');
  const int hour = in.digits(2);
  in.expect(':');
  const int minute = in.digits(2);
  in.expect(':');
  const int second = in.digits(2);

  int millis = 0;
  if (in.accept('.')) {
    if (!in.at_digit()) in.fail();
    int scale = 100;
    while (in.at_digit()) {
      millis += in.digits(1) * scale;
      scale /= 10;
    }
  }

  std::int64_t offset_minutes = 0;
  if (in.accept('Z')) {
  } else if (!in.done()) {
    int sign = 0;
    if (in.accept('+')) sign = 1;
    else if (in.accept('-')) sign = -1;
    else in.fail();
    const int oh = in.digits(2);
    in.accept(':');
    const int om = in.digits(2);
    if (oh > 23 || om > 59) in.fail();
    offset_minutes = sign * (oh * 60 + om);
  }
  if (!in.done()) in.fail();

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) in.fail();

  const auto days = sys_days{ymd}.time_since_epoch().count();
  std::int64_t ms = static_cast<std::int64_t>(days) * 86'400'000LL;
  ms += (hour * 3600LL + minute * 60LL + second) * 1000LL + millis;
  ms -= offset_minutes * 60'000LL;
  return Timestamp{ms};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  constexpr std::int64_t kDay = 86'400'000LL;
  std::int64_t days = t.millis / kDay;
  std::int64_t rem = t.millis % kDay;
  if (rem < 0) {
    rem += kDay;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  const auto hour = rem / 3'600'000;
  const auto minute = (rem / 60'000) % 60;
  const auto second = (rem / 1000) % 60;
  const auto millis = rem % 1000;
  return fmt::format("{:04d}-{:02d}-{:02d} {:02d}:{:02d}:{:02d}.{:03d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hour,
                     minute, second, millis);
}

}  // namespace devmine
