import numpy as np
import pytest

# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = {}

from haggis import demolang
from haggis.symbols import SymbolTable
from haggis.transforms import prepare_corpus
from haggis.trees import SourceTree, TreeNode

CURSOR_FILE = """\
import android.database.Cursor;
Cursor c = db.query(sql);
try {
    while (c.moveToNext()) {
        total = total + 1;
    }
} finally {
    c.close();
}
"""

LOOP_FILE = """\
import java.util.List;
for (int i = 0; i < n; i++) {
    print(i);
}
"""


@pytest.fixture
def demo_sources():
    out = []
    for i in range(4):
        out.append((f"cursor/f{i}.demo", CURSOR_FILE.replace("sql", f"q{i}")))
        out.append((f"loop/g{i}.demo", LOOP_FILE.replace("n;", f"n{i};")))
    return out


@pytest.fixture
def raw_demo_corpus(demo_sources):
    trees = []
    for path, src in demo_sources:
        root = demolang.parse_program(src)
        trees.append(SourceTree(path, [i.prop("name") for i in root.group("imports")], root))
    return trees


@pytest.fixture
def demo_corpus(raw_demo_corpus):
    return prepare_corpus(raw_demo_corpus)


def random_tree(rng, table, max_nodes=30, n_kinds=3, n_terms=2, branching=3):
    """Random tree over a small alphabet; nonterminals are N0.., terminals t0.."""
    budget = [max_nodes - 1]

    def grow(depth):
        kind = f"N{int(rng.integers(n_kinds))}"
        kids = []
        n = int(rng.integers(1, branching + 1))
        for _ in range(n):
            if budget[0] <= 0:
                break
            budget[0] -= 1
            if depth < 5 and rng.random() < 0.45:
                kids.append(grow(depth + 1))
            else:
                t = f"t{int(rng.integers(n_terms))}"
                kids.append(TreeNode(table.intern(t, role="token"), leaf_text=t))
        if not kids:
            t = "t0"
            kids.append(TreeNode(table.intern(t, role="token"), leaf_text=t))
        return TreeNode(table.intern(kind), kids)

    root = grow(0)
    root.z = True
    return root


def random_grouped_tree(rng, table, depth=0):
    """Random tree whose children sit in property groups of 1 to 5 members."""
    kind = f"K{int(rng.integers(3))}"
    kids = []
    for g in range(int(rng.integers(0, 3))):
        label = table.intern(f"{kind}::p{g}", role="group")
        members = []
        for _ in range(int(rng.integers(1, 6))):
            if depth < 3 and rng.random() < 0.5:
                members.append(random_grouped_tree(rng, table, depth + 1))
            else:
                t = f"t{int(rng.integers(2))}"
                members.append(TreeNode(table.intern(t, role="token"), leaf_text=t))
        kids.append(TreeNode(label, members))
    return TreeNode(table.intern(kind, role="node" if kids else "leaf"), kids)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def table():
    return SymbolTable()


# Four files, two packages, four idioms; every metric value below was worked
# out by hand from these trees.
HAND_FILES = [
    ("f0", ["p"], "(A (B x) (C y))"),
    ("f1", ["p"], "(A (B x) (D z))"),
    ("f2", ["q"], "(A (C y) (D z))"),
    ("f3", ["q"], "(E (C y))"),
]
HAND_IDIOMS = ["(B x)", "(C y)", "(A (B x) (D))", "(F w)"]


def hand_case(table):
    """Corpus and idiom keys for the hand-checked metric example.

    ``(D)`` inside an idiom is a slot: a D node whose subtree is left open.
    """
    from haggis.grammar import Fragment
    from haggis.trees import parse_bracketed

    corpus = [SourceTree(path, imps, parse_bracketed(text, table)) for path, imps, text in HAND_FILES]
    idioms = []
    for text in HAND_IDIOMS:
        tree = parse_bracketed(text.replace("(D)", "(D z)"), table)
        for n in tree.walk():
            if n.symbol.kind == "D":
                n.children = []
        idioms.append(Fragment.from_tree(tree))
    return corpus, idioms


@pytest.fixture
def hand(table):
    return hand_case(table)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
