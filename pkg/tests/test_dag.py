import pytest

from probdag.dag import DagConsistencyError, Kind, SearchDag, Status
from probdag.domains import SyntheticDomain, SyntheticSpec, TicTacToe
from probdag.domains.bags import BagDomain, bag_key
from probdag.domains.tictactoe import play


def full_expansion(domain, transpositions=True):
    dag = SearchDag(domain.root_state(), domain.key(domain.root_state()), domain.node_kind(0),
                    transpositions)
    stack = [dag.root]
    while stack:
        nid = stack.pop()
        if dag[nid].status == Status.BOUNDARY:
            stack.extend(dag.expand(nid, domain))
    return dag


class TestInsertion:
    def test_same_state_same_id(self):
        dag = SearchDag((), bag_key(()))
        a, new_a = dag.get_or_insert((1,), bag_key((1,)), 1, Kind.MAX)
        b, new_b = dag.get_or_insert((1,), bag_key((1,)), 1, Kind.MAX)
        assert a == b and new_a and not new_b
        assert len(dag) == 2

    def test_bag_order_irrelevant(self):
        dag = SearchDag((), bag_key(()))
        a, _ = dag.get_or_insert((2, 5), bag_key((5, 2)), 2, Kind.MAX)
        b, _ = dag.get_or_insert((2, 5), bag_key((2, 5)), 2, Kind.MAX)
        assert a == b

    def test_ttt_transposition(self):
        d = TicTacToe()
        dag = SearchDag(d.root_state(), d.key(d.root_state()))
        first = play(play(play(d.root_state(), 0), 4), 8)
        second = play(play(play(d.root_state(), 8), 4), 0)
        assert first == second
        a, _ = dag.get_or_insert(first, d.key(first), 3, Kind.MIN)
        b, new = dag.get_or_insert(second, d.key(second), 3, Kind.MIN)
        assert a == b and not new

    def test_conflicting_level_raises(self):
        dag = SearchDag((), bag_key(()))
        dag.get_or_insert((1,), bag_key((1,)), 1, Kind.MAX)
        with pytest.raises(DagConsistencyError):
            dag.get_or_insert((1,), bag_key((1,)), 2, Kind.MAX)

    def test_tree_mode_duplicates(self):
        dag = SearchDag((), bag_key(()), transpositions=False)
        a, _ = dag.get_or_insert((1,), bag_key((1,)), 1, Kind.MAX)
        b, new = dag.get_or_insert((1,), bag_key((1,)), 1, Kind.MAX)
        assert a != b and new


class TestExpansion:
    def test_empty_board(self):
        d = TicTacToe()
        dag = SearchDag(d.root_state(), d.key(d.root_state()))
        assert len(dag.expand(dag.root, d)) == 9
        assert all(dag[c].kind == Kind.MIN for c in dag[dag.root].children)

    def test_synthetic_root(self):
        d = SyntheticDomain(SyntheticSpec(seed=0))
        dag = SearchDag(d.root_state(), d.key(d.root_state()))
        assert len(dag.expand(dag.root, d)) == 15
        assert dag[dag.root].status == Status.INTERIOR

    def test_full_bag_is_terminal(self):
        d = SyntheticDomain(SyntheticSpec(seed=0))
        bag = (0, 1, 2, 3, 4)
        dag = SearchDag(bag, d.key(bag))
        assert dag.expand(dag.root, d) == []
        assert dag[dag.root].status == Status.TERMINAL

    def test_expand_twice_rejected(self):
        d = SyntheticDomain(SyntheticSpec(seed=0))
        dag = SearchDag(d.root_state(), d.key(d.root_state()))
        dag.expand(dag.root, d)
        with pytest.raises(ValueError):
            dag.expand(dag.root, d)

    def test_full_synthetic_counts(self):
        dag = full_expansion(SyntheticDomain(SyntheticSpec(seed=0)))
        assert len(dag) == 4944
        assert sum(n.status == Status.TERMINAL for n in dag.nodes) == 3003

    def test_edges_are_consistent(self):
        dag = full_expansion(BagDomainStub(6, 3))
        for n in dag.nodes:
            for c in n.children:
                assert n.id in dag[c].parents
                assert dag[c].level == n.level + 1
            assert len(set(n.children)) == len(n.children)

    def test_tree_mode_counts(self):
        # ordered selections 6 * 5 * 4 plus the shorter prefixes
        dag = full_expansion(BagDomainStub(6, 3), transpositions=False)
        assert len(dag) == 1 + 6 + 30 + 120


class BagDomainStub(BagDomain):
    def terminal_reward(self, state):
        return 0.0

    def kernel(self):
        raise NotImplementedError


class TestAncestors:
    def test_root(self):
        dag = SearchDag((), bag_key(()))
        assert dag.ancestors(dag.root) == set()

    def test_diamond(self):
        d = BagDomainStub(4, 2)
        dag = full_expansion(d)
        node = dag.lookup(bag_key((1, 2)))
        anc = dag.ancestors(node)
        assert anc == {dag.root, dag.lookup(bag_key((1,))), dag.lookup(bag_key((2,)))}

    def test_chain(self):
        d = BagDomainStub(1, 1)
        dag = full_expansion(d)
        leaf = dag.lookup(bag_key((0,)))
        assert len(dag.ancestors(leaf)) == 1

    def test_export_lists_every_node(self):
        dag = full_expansion(BagDomainStub(4, 2))
        lines = dag.export_lines()
        assert len(lines) == len(dag)
        assert lines[0].startswith("0 ")
