#include "aimm/backbone/backbone.hpp"

#include <cmath>

#include "aimm/nn/adam.hpp"

namespace aimm::bb {

void BackboneConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (n_layers == 0 || ffn == 0 || vocab == 0 || max_len == 0)
    throw ConfigError("backbone dimensions must be positive");
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"d_model", c.d_model}, {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
       {"ffn", c.ffn},         {"vocab", c.vocab},       {"max_len", c.max_len}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("ffn").get_to(c.ffn);
  j.at("vocab").get_to(c.vocab);
  j.at("max_len").get_to(c.max_len);
}

template <typename T>
ad::Var<T> apply_lora(const ad::Var<T>& w0, const LoraAdapter<T>& lora) {
  if (lora.a.rows() != w0.rows() || lora.b.cols() != w0.cols() || lora.a.cols() != lora.b.rows())
    throw DimensionError("LoRA factors do not match the frozen matrix");
  if (lora.rank() >= std::min(w0.rows(), w0.cols()))
    throw ConfigError("LoRA rank must be below both matrix dimensions");
  return ad::add(w0, ad::matmul(lora.a, lora.b));
}

template <typename T>
LoraSet<T> LoraSet<T>::init(const BackboneConfig& cfg, std::size_t rank, std::uint64_t seed) {
  if (rank == 0 || rank >= cfg.d_model) throw ConfigError("LoRA rank must lie in [1, d_model)");
  LoraSet s;
  Rng rng(seed, {0x4c6f5241 /* "LoRA" */});
  auto make = [&] {
    return LoraAdapter<T>{
        ad::Var<T>::leaf(nn::normal_tensor<T>({cfg.d_model, rank}, 0.02, rng), true),
        ad::Var<T>::leaf(Tensor<T>({rank, cfg.d_model}), true)};
  };
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    s.q.push_back(make());
    s.k.push_back(make());
  }
  return s;
}

template <typename T>
nn::ParamList<T> LoraSet<T>::params() const {
  nn::ParamList<T> p;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const std::string pre = "lora." + std::to_string(l);
    p.push_back({pre + ".q.a", q[l].a});
    p.push_back({pre + ".q.b", q[l].b});
    p.push_back({pre + ".k.a", k[l].a});
    p.push_back({pre + ".k.b", k[l].b});
  }
  return p;
}

template <typename T>
Backbone<T> Backbone<T>::init(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Backbone bb;
  bb.config = cfg;
  Rng rng(seed, {0x42424f4e /* "BBON" */});
  const std::size_t d = cfg.d_model;
  auto leaf = [](Tensor<T> t) { return ad::Var<T>::leaf(std::move(t), true); };
  auto ones = [&](std::size_t n) { return leaf(Tensor<T>::filled({n}, T(1))); };
  auto zeros = [&](std::size_t n) { return leaf(Tensor<T>({n})); };
  const double proj = 1.0 / std::sqrt(double(d));
  const double resid = proj / std::sqrt(2.0 * double(cfg.n_layers));
  bb.token_embedding = leaf(nn::normal_tensor<T>({cfg.vocab, d}, 0.02, rng));
  bb.position_embedding = leaf(nn::normal_tensor<T>({cfg.max_len, d}, 0.02, rng));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Block<T> b;
    b.ln1_gain = ones(d);
    b.ln1_bias = zeros(d);
    b.wq = leaf(nn::normal_tensor<T>({d, d}, proj, rng));
    b.wk = leaf(nn::normal_tensor<T>({d, d}, proj, rng));
    b.wv = leaf(nn::normal_tensor<T>({d, d}, proj, rng));
    b.wo = leaf(nn::normal_tensor<T>({d, d}, resid, rng));
    b.ln2_gain = ones(d);
    b.ln2_bias = zeros(d);
    b.ffn_in = nn::Linear<T>::init(d, cfg.ffn, rng, std::sqrt(2.0));
    b.ffn_out = nn::Linear<T>::init(cfg.ffn, d, rng, 1.0 / std::sqrt(2.0 * double(cfg.n_layers)));
    bb.blocks.push_back(std::move(b));
  }
  bb.final_gain = ones(d);
  bb.final_bias = zeros(d);
  return bb;
}

namespace {

template <typename T>
ad::Var<T> project(const ad::Var<T>& x, const ad::Var<T>& w0, const LoraAdapter<T>* lora) {
  const auto base = ad::matmul(x, w0);
  if (!lora) return base;
  return ad::add(base, ad::matmul(ad::matmul(x, lora->a), lora->b));
}

constexpr double kLayerNormEps = 1e-5;

}  // namespace

template <typename T>
ad::Var<T> Backbone<T>::forward(const ad::Var<T>& x, std::size_t seq,
                                const LoraSet<T>* lora) const {
  if (seq == 0 || seq > config.max_len)
    throw DimensionError("sequence length " + std::to_string(seq) + " exceeds max_len " +
                         std::to_string(config.max_len));
  if (x.cols() != config.d_model || x.rows() % seq != 0)
    throw DimensionError("backbone input must be [B·seq × d_model]");
  if (lora && (lora->q.size() != blocks.size() || lora->k.size() != blocks.size()))
    throw DimensionError("LoRA set does not match the layer count");
  ++forward_calls;
  const T eps = static_cast<T>(kLayerNormEps);
  auto h = ad::add_positional(x, position_embedding, seq);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const auto n1 = ad::layer_norm(h, b.ln1_gain, b.ln1_bias, eps);
    const auto q = project(n1, b.wq, lora ? &lora->q[l] : nullptr);
    const auto k = project(n1, b.wk, lora ? &lora->k[l] : nullptr);
    const auto v = ad::matmul(n1, b.wv);
    h = ad::add(h, ad::matmul(ad::causal_attention(q, k, v, seq, config.n_heads), b.wo));
    const auto n2 = ad::layer_norm(h, b.ln2_gain, b.ln2_bias, eps);
    h = ad::add(h, b.ffn_out.forward(ad::gelu(b.ffn_in.forward(n2))));
  }
  return ad::layer_norm(h, final_gain, final_bias, eps);
}

template <typename T>
ad::Var<T> Backbone<T>::last_output(const ad::Var<T>& x, std::size_t seq,
                                    const LoraSet<T>* lora) const {
  return ad::last_rows(forward(x, seq, lora), seq);
}

template <typename T>
ad::Var<T> Backbone<T>::lm_logits(std::span<const int> ids, std::size_t seq,
                                  const LoraSet<T>* lora) const {
  const auto h = forward(ad::gather_rows(token_embedding, ids), seq, lora);
  return ad::matmul_bt(h, token_embedding);
}

template <typename T>
nn::ParamList<T> Backbone<T>::params() const {
  nn::ParamList<T> p;
  p.push_back({"token_embedding", token_embedding});
  p.push_back({"position_embedding", position_embedding});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string pre = "block." + std::to_string(l);
    p.push_back({pre + ".ln1.gain", b.ln1_gain});
    p.push_back({pre + ".ln1.bias", b.ln1_bias});
    p.push_back({pre + ".wq", b.wq});
    p.push_back({pre + ".wk", b.wk});
    p.push_back({pre + ".wv", b.wv});
    p.push_back({pre + ".wo", b.wo});
    p.push_back({pre + ".ln2.gain", b.ln2_gain});
    p.push_back({pre + ".ln2.bias", b.ln2_bias});
    b.ffn_in.collect(pre + ".ffn_in", p);
    b.ffn_out.collect(pre + ".ffn_out", p);
  }
  p.push_back({"final.gain", final_gain});
  p.push_back({"final.bias", final_bias});
  return p;
}

std::vector<std::vector<int>> synthetic_corpus(std::uint64_t seed, std::size_t count,
                                               std::size_t length, const instr::Vocab& vocab) {
  if (length != 8) throw ConfigError("the synthetic grammar produces 8-word sentences");
  using Words = std::vector<std::string_view>;
  static const Words verbs = {"predict", "estimate", "select", "report"};
  static const std::vector<Words> phrases = {
      {"path", "loss"},     {"beam", "selection"}, {"los", "status"},  {"user", "information"},
      {"precoding", "vector"}, {"position", "index"}, {"signal", "power"}, {"channel", "gain"}};
  // nouns that follow each phrase; ties the sentence end to its topic
  static const std::vector<Words> topic_nouns = {
      {"station", "area", "street"}, {"array", "antenna", "angle"}, {"building", "wall", "block"},
      {"device", "task", "link"},     {"antenna", "array", "vector"}, {"map", "area", "street"},
      {"carrier", "band", "frequency"}, {"delay", "ray", "wave"}};
  static const Words preps = {"from", "at", "in", "with", "on", "for"};
  static const Words adjs = {"strong", "weak", "direct", "reflected", "urban", "best", "mobile"};

  std::vector<std::vector<int>> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng(seed, {0x636f7270 /* "corp" */, s});
    auto pick = [&](const Words& w) {
      return w[static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(w.size()) - 1))];
    };
    const auto topic = static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(phrases.size()) - 1));
    const auto& ph = phrases[topic];
    Words w;
    switch (rng.uniform_int(0, 2)) {
      case 0:  // verb the P1 P2 prep the adj noun
        w = {pick(verbs), "the", ph[0], ph[1], pick(preps), "the", pick(adjs), pick(topic_nouns[topic])};
        break;
      case 1:  // the adj noun is the P1 P2 value
        w = {"the", pick(adjs), pick(topic_nouns[topic]), "is", "the", ph[0], ph[1], "value"};
        break;
      default:  // P1 P2 of the noun prep the noun
        w = {ph[0], ph[1], "of", "the", pick(topic_nouns[topic]), pick(preps), "the",
             pick(topic_nouns[topic])};
        break;
    }
    std::vector<int> ids;
    for (auto word : w) ids.push_back(vocab.id(word));
    out.push_back(std::move(ids));
  }
  return out;
}

namespace {

// Inputs are words 0..L-2, targets words 1..L-1.
void split_batch(const std::vector<std::vector<int>>& sentences, std::size_t begin,
                 std::size_t count, std::vector<int>& inputs, std::vector<int>& targets) {
  inputs.clear();
  targets.clear();
  for (std::size_t i = begin; i < begin + count; ++i) {
    const auto& s = sentences[i];
    inputs.insert(inputs.end(), s.begin(), s.end() - 1);
    targets.insert(targets.end(), s.begin() + 1, s.end());
  }
}

}  // namespace

double perplexity(const Backbone<float>& bb, const std::vector<std::vector<int>>& sentences) {
  if (sentences.empty()) throw EvaluationError("perplexity of an empty corpus");
  const std::size_t seq = sentences.front().size() - 1;
  double total = 0.0;
  std::size_t n = 0;
  std::vector<int> in, tgt;
  for (std::size_t start = 0; start < sentences.size(); start += 64) {
    const std::size_t count = std::min<std::size_t>(64, sentences.size() - start);
    split_batch(sentences, start, count, in, tgt);
    const auto logits = bb.lm_logits(in, seq).value();
    for (std::size_t r = 0; r < tgt.size(); ++r) {
      total -= ad::log_prob_of<float>(
          std::span<const float>(logits.data() + r * logits.cols(), logits.cols()), tgt[r]);
      ++n;
    }
  }
  return std::exp(total / double(n));
}

Backbone<float> pretrain_lm(const BackboneConfig& cfg, const PretrainOptions& options,
                            PretrainReport* report) {
  const auto& vocab = instr::default_vocab();
  if (cfg.vocab != vocab.size()) throw ConfigError("backbone vocab must match the vocabulary");
  auto bb = Backbone<float>::init(cfg, options.seed);
  const auto heldout = synthetic_corpus(options.seed ^ 0x5a5a5a5aULL, 256, cfg.max_len, vocab);
  if (report) report->initial_perplexity = perplexity(bb, heldout);
  nn::Adam opt(bb.params(), {.lr = options.lr});
  const std::size_t seq = cfg.max_len - 1;
  std::vector<int> in, tgt;
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto batch = synthetic_corpus(options.seed + 1 + step, options.batch, cfg.max_len, vocab);
    split_batch(batch, 0, batch.size(), in, tgt);
    const auto loss = ad::cross_entropy(bb.lm_logits(in, seq), std::span<const int>(tgt));
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
    if (report) report->loss.push_back(loss.item());
  }
  opt.zero_grad();
  if (report) report->final_perplexity = perplexity(bb, heldout);
  return bb;
}

io::Bundle backbone_bundle(const Backbone<float>& bb, const instr::Vocab& vocab,
                           const nlohmann::json& extra) {
  io::Bundle b;
  b.meta = {{"config", bb.config},
            {"layers", bb.blocks.size()},
            {"vocab", vocab.to_json()},
            {"vocab_hash", vocab.hash()},
            {"info", extra}};
  io::add_params(b, bb.params());
  return b;
}

Backbone<float> backbone_from_bundle(const io::Bundle& b, const instr::Vocab& vocab) {
  BackboneConfig cfg;
  std::uint64_t hash = 0;
  try {
    cfg = b.meta.at("config").get<BackboneConfig>();
    hash = b.meta.at("vocab_hash").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("backbone header incomplete: ") + e.what());
  }
  if (hash != vocab.hash()) throw CheckpointError("backbone was trained with another vocabulary");
  auto bb = Backbone<float>::init(cfg, 0);
  io::load_params(b, bb.params());
  return bb;
}

void save_backbone(const std::filesystem::path& path, const Backbone<float>& bb,
                   const instr::Vocab& vocab, const nlohmann::json& extra) {
  io::save_bundle(path, "AIMB", backbone_bundle(bb, vocab, extra));
}

Backbone<float> load_backbone(const std::filesystem::path& path, const instr::Vocab& vocab) {
  return backbone_from_bundle(io::load_bundle(path, "AIMB"), vocab);
}

void save_lora(const std::filesystem::path& path, const LoraSet<float>& lora) {
  io::Bundle b;
  b.meta = {{"rank", lora.q.empty() ? 0 : lora.q.front().rank()}, {"layers", lora.q.size()}};
  io::add_params(b, lora.params());
  io::save_bundle(path, "AIML", b);
}

LoraSet<float> load_lora(const std::filesystem::path& path, const BackboneConfig& cfg) {
  const auto b = io::load_bundle(path, "AIML");
  const auto rank = b.meta.at("rank").get<std::size_t>();
  if (b.meta.at("layers").get<std::size_t>() != cfg.n_layers)
    throw CheckpointError("LoRA layer count does not match the backbone");
  auto lora = LoraSet<float>::init(cfg, rank, 0);
  io::load_params(b, lora.params());
  return lora;
}

template ad::Var<float> apply_lora<float>(const ad::Var<float>&, const LoraAdapter<float>&);
template ad::Var<double> apply_lora<double>(const ad::Var<double>&, const LoraAdapter<double>&);
template struct LoraSet<float>;
template struct LoraSet<double>;
template struct Backbone<float>;
template struct Backbone<double>;

}  // namespace aimm::bb
