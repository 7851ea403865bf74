#include <sstream>

#include <gtest/gtest.h>

#include "softbart/csv.hpp"

namespace softbart {
namespace {

TEST(Csv, InfersColumnTypes) {
  std::istringstream in("a,b,c\n1,x,2.5\n-3e2,y,+4\n");
  const Table t = read_csv(in);
  ASSERT_EQ(t.cols(), 3u);
  ASSERT_EQ(t.rows(), 2u);
  EXPECT_TRUE(t.column("a").is_numeric());
  EXPECT_EQ(t.column("a").numeric()[1], -300.0);
  EXPECT_FALSE(t.column("b").is_numeric());
  EXPECT_EQ(t.column("b").categorical()[1], "y");
  EXPECT_EQ(t.column("c").numeric()[1], 4.0);
}

TEST(Csv, QuotedFields) {
  std::istringstream in("name,v\r\n\"a, \"\"b\"\"\",1\r\n\"multi\nline\",2\r\n");
  const Table t = read_csv(in);
  ASSERT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.column("name").categorical()[0], "a, \"b\"");
  EXPECT_EQ(t.column("name").categorical()[1], "multi\nline");
}

TEST(Csv, OverridesAndErrors) {
  std::istringstream in("g,v\n1,2\n2,3\n");
  CsvReadOptions opts;
  opts.categorical.insert("g");
  const Table t = read_csv(in, opts);
  EXPECT_FALSE(t.column("g").is_numeric());

  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(read_csv(ragged), InputError);
  std::istringstream empty("");
  EXPECT_THROW(read_csv(empty), InputError);
  std::istringstream open_quote("a\n\"x\n");
  EXPECT_THROW(read_csv(open_quote), InputError);
  std::istringstream not_num("a\nfoo\n");
  CsvReadOptions force;
  force.numeric.insert("a");
  EXPECT_THROW(read_csv(not_num, force), InputError);
  std::istringstream dup("a,a\n1,2\n");
  EXPECT_THROW(read_csv(dup), InputError);
}

TEST(Csv, RoundTripIsExact) {
  Table t;
  t.add_numeric("x", {0.1, 1.0 / 3.0, -2.5e-300, 1e22});
  t.add_categorical("g", {"a", "b,c", "\"q\"", ""});
  std::ostringstream out;
  write_csv(out, t);
  std::istringstream in(out.str());
  CsvReadOptions opts;
  opts.categorical.insert("g");
  const Table back = read_csv(in, opts);
  EXPECT_EQ(back.column("x").numeric(), t.column("x").numeric());
  EXPECT_EQ(back.column("g").categorical(), t.column("g").categorical());
}

TEST(Csv, FormatDoubleShortest) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_double(-1.5e-7), "-1.5e-07");
}

TEST(Table, ReplaceAndLengthChecks) {
  Table t;
  t.add_numeric("x", {1, 2});
  EXPECT_THROW(t.add_numeric("y", {1}), InputError);
  t.replace(Column{"x", std::vector<double>{5, 6}});
  EXPECT_EQ(t.column("x").numeric()[0], 5.0);
  EXPECT_THROW(t.replace(Column{"z", std::vector<double>{5, 6}}), InputError);
  EXPECT_THROW(t.column("nope"), InputError);
}

}  // namespace
}  // namespace softbart
