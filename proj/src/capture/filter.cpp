#include "nsb/capture/filter.hpp"

#include <cctype>
#include <vector>

#include "nsb/common/text.hpp"

namespace nsb::capture {

struct PacketFilter::Node {
    enum class Op { and_, or_, not_, proto, port, host } op;
    enum class Dir { any, src, dst } dir = Dir::any;
    std::uint32_t value = 0;
    std::shared_ptr<const Node> lhs, rhs;

    bool eval(const DecodedPacket& p) const
    {
        switch (op) {
        case Op::and_:
            return lhs->eval(p) && rhs->eval(p);
        case Op::or_:
            return lhs->eval(p) || rhs->eval(p);
        case Op::not_:
            return !lhs->eval(p);
        case Op::proto:
            return value == 0 || p.proto == value;  // 0 = any IPv4
        case Op::port:
            if (!p.has_ports) {
                return false;
            }
            return (dir != Dir::dst && p.sport == value) || (dir != Dir::src && p.dport == value);
        case Op::host:
            return (dir != Dir::dst && p.src == value) || (dir != Dir::src && p.dst == value);
        }
        return false;
    }
};

namespace {

using Node = PacketFilter::Node;
using NodePtr = std::shared_ptr<const Node>;

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '(' || c == ')' || c == '!') {
            out.emplace_back(1, c);
            ++i;
        } else if ((c == '&' || c == '|') && i + 1 < text.size() && text[i + 1] == c) {
            out.emplace_back(2, c);
            i += 2;
        } else {
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '(' &&
                   text[j] != ')' && text[j] != '!' && text[j] != '&' && text[j] != '|') {
                ++j;
            }
            if (j == i) {
                throw FilterSyntaxError("unexpected character '" + std::string(1, c) + "'");
            }
            out.emplace_back(text.substr(i, j - i));
            i = j;
        }
    }
    return out;
}

class Parser {
public:
    explicit Parser(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}

    NodePtr parse()
    {
        auto n = parse_or();
        if (pos_ != tokens_.size()) {
            throw FilterSyntaxError("unexpected token '" + tokens_[pos_] + "'");
        }
        return n;
    }

private:
    bool at_end() const { return pos_ >= tokens_.size(); }
    const std::string& peek() const { return tokens_[pos_]; }

    bool accept(std::initializer_list<const char*> words)
    {
        if (at_end()) {
            return false;
        }
        for (const char* w : words) {
            if (peek() == w) {
                ++pos_;
                return true;
            }
        }
        return false;
    }

    static NodePtr binary(Node::Op op, NodePtr a, NodePtr b)
    {
        return std::make_shared<Node>(Node{op, Node::Dir::any, 0, std::move(a), std::move(b)});
    }

    NodePtr parse_or()
    {
        auto lhs = parse_and();
        while (accept({"or", "||"})) {
            lhs = binary(Node::Op::or_, lhs, parse_and());
        }
        return lhs;
    }

    bool starts_unary() const
    {
        if (at_end()) {
            return false;
        }
        const auto& t = peek();
        return t != ")" && t != "or" && t != "||" && t != "and" && t != "&&";
    }

    NodePtr parse_and()
    {
        auto lhs = parse_unary();
        while (true) {
            if (accept({"and", "&&"})) {
                lhs = binary(Node::Op::and_, lhs, parse_unary());
            } else if (starts_unary()) {
                lhs = binary(Node::Op::and_, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_unary()
    {
        if (at_end()) {
            throw FilterSyntaxError("unexpected end of filter expression");
        }
        if (accept({"not", "!"})) {
            return std::make_shared<Node>(Node{Node::Op::not_, Node::Dir::any, 0, parse_unary(), nullptr});
        }
        if (accept({"("})) {
            auto inner = parse_or();
            if (!accept({")"})) {
                throw FilterSyntaxError("missing ')'");
            }
            return inner;
        }
        return parse_primitive();
    }

    NodePtr parse_primitive()
    {
        const std::string word = peek();
        ++pos_;
        if (word == "tcp" || word == "udp" || word == "icmp" || word == "ip") {
            std::uint32_t proto = word == "tcp" ? ip_proto_tcp : word == "udp" ? ip_proto_udp : word == "icmp" ? ip_proto_icmp : 0;
            return std::make_shared<Node>(Node{Node::Op::proto, Node::Dir::any, proto, nullptr, nullptr});
        }
        Node::Dir dir = Node::Dir::any;
        std::string kind = word;
        if (word == "src" || word == "dst") {
            dir = word == "src" ? Node::Dir::src : Node::Dir::dst;
            if (at_end()) {
                throw FilterSyntaxError("expected 'port' or 'host' after '" + word + "'");
            }
            kind = peek();
            ++pos_;
        }
        if (kind == "port") {
            if (at_end()) {
                throw FilterSyntaxError("expected a port number");
            }
            auto v = parse_int(peek());
            if (!v || *v < 0 || *v > 65535) {
                throw FilterSyntaxError("invalid port '" + peek() + "'");
            }
            ++pos_;
            return std::make_shared<Node>(Node{Node::Op::port, dir, static_cast<std::uint32_t>(*v), nullptr, nullptr});
        }
        if (kind == "host") {
            if (at_end()) {
                throw FilterSyntaxError("expected an IPv4 address");
            }
            auto a = parse_ipv4(peek());
            if (!a) {
                throw FilterSyntaxError("invalid IPv4 address '" + peek() + "'");
            }
            ++pos_;
            return std::make_shared<Node>(Node{Node::Op::host, dir, *a, nullptr, nullptr});
        }
        throw FilterSyntaxError("unsupported filter primitive '" + kind + "'");
    }

    std::vector<std::string> tokens_;
    std::size_t pos_ = 0;
};

} // namespace

PacketFilter PacketFilter::compile(std::string_view expression)
{
    PacketFilter f;
    f.text_ = std::string(trim(expression));
    auto tokens = tokenize(f.text_);
    if (!tokens.empty()) {
        f.root_ = Parser(std::move(tokens)).parse();
    }
    return f;
}

bool PacketFilter::matches(const std::optional<DecodedPacket>& packet) const
{
    if (!root_) {
        return true;
    }
    return packet && root_->eval(*packet);
}

} // namespace nsb::capture
