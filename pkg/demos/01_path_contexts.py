"""
From C source to path contexts
==============================

Parse a small function, list the leaf-to-leaf AST paths and encode them
against a vocabulary, the form the model consumes.
"""

from attnfuse.ast_frontend import dump_ast_json, parse_source
from attnfuse.paths import build_vocab, encode_sequence, extract_path_contexts

source = """void f()
{
    int a = 0;
    scanf("%d", &a);
}
"""
ast = parse_source(source)
print(dump_ast_json(ast).decode()[:300], "...\n")

# no length or width limit: every leaf pair appears once
seq = extract_path_contexts(ast, max_path_length=0, max_path_width=0)
for src, path, sink in seq.triples():
    print(f"{src:>6}  {path}  {sink}")

# the default limits keep only short, nearby pairs
print(len(seq.contexts), "contexts unlimited,",
      len(extract_path_contexts(ast).contexts), "with default limits")

vocab = build_vocab([seq])
enc = encode_sequence(seq, vocab)
print("encoded shape", enc.shape, "first rows\n", enc[:4])
