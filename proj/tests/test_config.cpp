#include <gtest/gtest.h>

#include <set>

#include "nlhom/config.hpp"
#include "nlhom/errors.hpp"
#include "nlhom/harness.hpp"

using namespace nlhom;

TEST(Config, ParsesKeyValueLines)
{
    const Config c = Config::parse("# comment\n\n  lattice.eps = 0.25  \nmodel.K=exp:1\nflag = yes\n");
    EXPECT_TRUE(c.has("lattice.eps"));
    EXPECT_DOUBLE_EQ(c.get_double("lattice.eps", 0.0), 0.25);
    EXPECT_EQ(c.get_string("model.K", ""), "exp:1");
    EXPECT_EQ(c.get_string("missing", "fallback"), "fallback");
    EXPECT_EQ(c.get_int("missing", 7), 7);
    EXPECT_EQ(c.entries().size(), 3u);
}

TEST(Config, RejectsMalformedInput)
{
    EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigurationError);
    EXPECT_THROW(Config::parse("just text\n"), ConfigurationError);
    EXPECT_THROW(Config::parse(" = 3\n"), ConfigurationError);
    EXPECT_THROW(Config::load("/nonexistent/path.cfg"), ConfigurationError);
}

TEST(Config, TypedGetters)
{
    const Config c = Config::parse("d = 1e-3\ni = 12\nb1 = true\nb0 = false\nl = 1, 2.5 ,3\nv = 0.5,0.5,0.5\nbad = x1\n");
    EXPECT_DOUBLE_EQ(c.get_double("d", 0), 1e-3);
    EXPECT_EQ(c.get_int("i", 0), 12);
    EXPECT_TRUE(c.get_bool("b1", false));
    EXPECT_FALSE(c.get_bool("b0", true));
    EXPECT_EQ(c.get_list("l", {}), (std::vector<double>{1, 2.5, 3}));
    EXPECT_EQ(c.get_vec3("v", Vec3::Zero()), Vec3::Constant(0.5));
    EXPECT_THROW(c.get_double("bad", 0), ConfigurationError);
    EXPECT_THROW(c.get_int("d", 0), ConfigurationError);
    EXPECT_THROW(c.get_bool("i", false), ConfigurationError);
    EXPECT_THROW(c.get_vec3("d", Vec3::Zero()), ConfigurationError);
    EXPECT_THROW(parse_number_list("1,,2"), ConfigurationError);
}

TEST(Config, UnknownKeysAreNamed)
{
    const Config c = Config::parse("lattice.eps = 0.25\nlattice.epsilon = 0.25\n");
    try {
        c.require_known({"lattice.eps"});
        FAIL() << "expected a ConfigurationError";
    } catch (const ConfigurationError& e) {
        EXPECT_NE(std::string(e.what()).find("lattice.epsilon"), std::string::npos);
    }
}

TEST(Config, HashIsCanonical)
{
    const Config a = Config::parse("x = 1\ny = 2\n");
    const Config b = Config::parse("# reordered\ny = 2\n  x =1\n");
    const Config c = Config::parse("x = 1\ny = 3\n");
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    EXPECT_EQ(a.hash().find_first_not_of("0123456789abcdef"), std::string::npos);
}

TEST(Config, Fnv1aReferenceValues)
{
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Config, SchemaDefaultsAreConsistent)
{
    std::set<std::string> keys;
    for (const auto& k : config_schema()) {
        EXPECT_TRUE(keys.insert(k.key).second) << "duplicate " << k.key;
        EXPECT_FALSE(k.description.empty()) << k.key;
    }
    EXPECT_TRUE(keys.count("lattice.eps"));
    EXPECT_TRUE(keys.count("converge.eps"));
    // Defaults alone form a valid model and lattice.
    const Config empty;
    EXPECT_NO_THROW(model_from_config(empty).validate());
    EXPECT_NO_THROW(lattice_from_config(empty).validate());
    EXPECT_DOUBLE_EQ(lattice_from_config(empty).eps, 0.125);
}

TEST(Config, NumberFormatting)
{
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(1.0), "1");
    EXPECT_EQ(format_number(-2.5e-7), "-2.5e-07");
    for (double v : {1.0 / 3.0, 2.718281828459045, 1e-300, 123456789.123})
        EXPECT_EQ(std::stod(format_number(v)), v);
}
