#include <gtest/gtest.h>

#include "devmine/digest.hpp"
#include "devmine/error.hpp"
#include "devmine/io.hpp"
#include "devmine/matrix.hpp"
#include "devmine/random.hpp"
#include "devmine/timestamp.hpp"

using namespace devmine;

TEST(Timestamp, ParsesListingFormatAsUtc) {
  const auto t = parse_timestamp("2019-05-03 16:53:52.144");
  EXPECT_EQ(format_timestamp(t), "2019-05-03 16:53:52.144");
  EXPECT_EQ(t.millis, 1556902432144);
}

TEST(Timestamp, NormalizesOffsets) {
  EXPECT_EQ(parse_timestamp("2019-05-03T18:53:52.144+02:00"), parse_timestamp("2019-05-03 16:53:52.144"));
  EXPECT_EQ(parse_timestamp("2019-05-03 16:53:52Z").millis % 1000, 0);
}

TEST(Timestamp, RejectsImpossibleDates) {
  EXPECT_THROW(parse_timestamp("2019-02-30 00:00:00"), InputError);
  EXPECT_THROW(parse_timestamp("yesterday"), InputError);
}

TEST(Digest, Md5KnownVectors) {
  EXPECT_EQ(md5_hex(""), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(md5_hex("abc"), "900150983cd24fb0d6963f7d28e17f72");
  EXPECT_TRUE(is_digest_hex(md5_hex("abc")));
  EXPECT_FALSE(is_digest_hex("900150983CD24FB0D6963F7D28E17F72"));
}

TEST(Csv, QuotingRoundTrip) {
  const std::vector<std::string> fields = {"a,b", "say \"hi\"", "", "line\nbreak"};
  const auto records = parse_csv(csv_line(fields));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].fields, fields);
}

TEST(Csv, UnterminatedQuoteIsFlagged) {
  const auto records = parse_csv("a,b\n\"oops,c\n");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_TRUE(records[1].malformed);
}

TEST(Numbers, FormatRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -25.0, 1e-12, 123456789.125}) EXPECT_EQ(*parse_number(format_number(v)), v);
  EXPECT_FALSE(parse_number("12abc"));
}

TEST(Matrix, SelectAndPush) {
  Matrix m(0, 2);
  m.push_row(std::vector<double>{1, 2});
  m.push_row(std::vector<double>{3, 4});
  const std::vector<std::size_t> idx = {1};
  EXPECT_EQ(m.select_rows(idx)(0, 1), 4.0);
  EXPECT_EQ(m.select_cols(idx).column_values(0), (std::vector<double>{2, 4}));
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  static_assert(derive_seed(7, 3) == derive_seed(7, 3));
}
