#include <gtest/gtest.h>

#include <set>

#include "mmgraph/config.hpp"

using namespace mmgraph;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, DefaultsMatchComponents) {
    const RunConfig c = parse_config_string("");
    EXPECT_EQ(c.model.hidden, 32u);
    EXPECT_EQ(c.model.iterations, 2u);
    EXPECT_EQ(c.model.lengths, (Triple{10, 40, 40}));
    EXPECT_EQ(c.train.adam.lr, 0.001);
    EXPECT_EQ(c.train.reg_weight, 0.01);
    EXPECT_EQ(c.data.train_count, 800u);
    EXPECT_EQ(c.bench.model.lengths, (Triple{50, 500, 500}));
    EXPECT_EQ(c.bench.timed, 30u);
    EXPECT_EQ(c.bench.warmup, 5u);
}

TEST(Config, ParsesSections) {
    const RunConfig c = parse_config_string(
        "# comment\n"
        "[data]\n"
        "lengths = 5, 6, 7\n"
        "noise = 0\n"
        "[model]\n"
        "adjacency = gdm\n"
        "gdm_lambda = 3\n"
        "pool_mode = max\n"
        "link_pool = false\n"
        "[train]\n"
        "epochs = 4\n"
        "lr = 0.01\n"
        "[bench]\n"
        "adjacency = all_one\n"
        "[output]\n"
        "dir = /tmp/x\n");
    EXPECT_EQ(c.data.synth.lengths, (Triple{5, 6, 7}));
    EXPECT_EQ(c.model.lengths, (Triple{5, 6, 7}));
    EXPECT_EQ(c.data.synth.noise, 0.0);
    EXPECT_EQ(c.model.adjacency, AdjacencyKind::GDM);
    EXPECT_EQ(c.model.gdm.lambda, 3.0);
    EXPECT_EQ(c.model.gpfn.pool_mode, Reduce::Max);
    EXPECT_FALSE(c.model.gpfn.link_pool);
    EXPECT_EQ(c.train.epochs, 4u);
    EXPECT_EQ(c.train.adam.lr, 0.01);
    EXPECT_EQ(c.out, "/tmp/x");
    EXPECT_EQ(c.bench.model.adjacency, AdjacencyKind::AllOne);
    EXPECT_EQ(c.bench.model.lengths, (Triple{50, 500, 500}));
    EXPECT_EQ(c.bench.model.gdm.lambda, 3.0);
}

TEST(Config, UnknownKeyNamed) {
    const auto e = error_of("[model]\nhiden = 3\n");
    EXPECT_NE(e.find("model.hiden"), std::string::npos) << e;
    EXPECT_NE(e.find(":2:"), std::string::npos) << e;
}

TEST(Config, OtherErrors) {
    EXPECT_NE(error_of("[nope]\n").find("nope"), std::string::npos);
    EXPECT_NE(error_of("hidden = 3\n").find("outside"), std::string::npos);
    EXPECT_NE(error_of("[model]\nhidden 3\n").find("key = value"), std::string::npos);
    EXPECT_NE(error_of("[model]\nhidden = x\n").find("model.hidden"), std::string::npos);
    EXPECT_NE(error_of("[model]\nadjacency = ring\n").find("model.adjacency"), std::string::npos);
    EXPECT_NE(error_of("[data]\nlengths = 1,2\n").find("data.lengths"), std::string::npos);
    EXPECT_NE(error_of("[model]\nlink_pool = maybe\n").find("model.link_pool"), std::string::npos);
}

TEST(Config, ValidateCatchesBadValues) {
    RunConfig c = parse_config_string("[train]\nbatch_size = 0\n");
    EXPECT_THROW(c.validate(), ConfigError);
    c = parse_config_string("[data]\ncount = 10\n");
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_NO_THROW(parse_config_string("").validate());
}

TEST(Config, DescribeRoundTrips) {
    RunConfig c = parse_config_string("[model]\nadjacency = knn\nknn_alpha = 0.5\n[train]\nseed = 11\n");
    c.set_seed(12);
    const RunConfig back = parse_config_string(describe_config(c));
    EXPECT_EQ(describe_config(back), describe_config(c));
    EXPECT_EQ(back.train.seed, 12u);
    EXPECT_EQ(back.data.synth.seed, 12u);
    EXPECT_EQ(back.model.adjacency, AdjacencyKind::KNN);
}

TEST(Config, EveryKeyIsDescribed) {
    const std::string text = describe_config(parse_config_string(""));
    std::string section;
    std::set<std::string> described;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line[0] == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        described.insert(section + "." + line.substr(0, line.find(' ')));
    }
    for (const auto& k : config_key_names()) EXPECT_TRUE(described.count(k)) << k;
}
