#include "nelsonlab/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nelsonlab;

TEST_CASE("FNV-1a reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("numbers round-trip in shortest form") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(-2.5) == "-2.5");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(format_number(42LL) == "42");
    for (double v : {1.0 / 3.0, 2.718281828459045, 6.02214076e23}) CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("CSV rendering: hash line, header, quoting, LF endings") {
    CsvTable t{{"name", "value"}, {}};
    t.add({"plain", "1"});
    t.add({"a,b", "say \"hi\""});
    const std::string s = render_csv(t, "0123456789abcdef");
    CHECK(s == "# config_hash: 0123456789abcdef\nname,value\nplain,1\n\"a,b\",\"say \"\"hi\"\"\"\n");
    CHECK(csv_body(s) == "name,value\nplain,1\n\"a,b\",\"say \"\"hi\"\"\"\n");
    CHECK(s.find('\r') == std::string::npos);
    CHECK_THROWS(t.add({"too", "many", "cells"}));
}

TEST_CASE("write_csv creates directories") {
    const auto dir = std::filesystem::temp_directory_path() / "nelsonlab_io_test" / "nested";
    std::filesystem::remove_all(dir.parent_path());
    CsvTable t{{"x"}, {{"1"}}};
    write_csv(dir / "t.csv", t, "00000000000000ff");
    std::ifstream in(dir / "t.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == render_csv(t, "00000000000000ff"));
    std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("basis and operator tables") {
    const auto g = std::make_shared<ModeGrid>(line_grid(2, 1.0, 0.1));
    const auto b = build_basis(g, 1);
    const CsvTable bt = basis_table(*b);
    REQUIRE(bt.rows.size() == 3);
    CHECK(bt.rows[0][1] == "0;0");
    CHECK(bt.rows[1][2] == "1");
    const CsvTable ot = operator_table(number_op(*b));
    CHECK(ot.header == std::vector<std::string>{"row", "col", "re", "im"});
    CHECK(ot.rows.size() == 2);
}
