"""Prompt texts: the agent instruction, function list, graph descriptions and
the academic demonstrations."""
from __future__ import annotations

INSTRUCTION = (
    "Solve a question answering task with interleaving Thought, Interaction with Graph, "
    "Feedback from Graph steps."
)
INTERACTION_INTRO = (
    "In Thought step, you can think about what further information is needed, and In Interaction "
    "step, you can get feedback from graphs with four functions:"
)

FUNCTION_DESCRIPTIONS = """(1) RetrieveNode[keyword], which retrieves the related node from the graph according to the corresponding query.
(2) NodeFeature[Node, feature], which returns the detailed attribute information of Node regarding the given "feature" key.
(3) NodeDegree[Node, neighbor type], which calculates the number of "neighbor type" neighbors of the node Node in the graph.
(4) NeighbourCheck[Node, neighbor type], which lists the "neighbor type" neighbours of the node Node in the graph and returns them."""

STEPS_NOTE = "You may take as many steps as necessary."
EXAMPLES_HEADER = "Here are some examples:"
EXAMPLES_FOOTER = "(END OF EXAMPLES)"
CLOSING = "Please answer by providing node main feature (e.g., names) rather than node IDs."

GRAPH_DESCRIPTIONS = {
    "mag": (
        "There are three types of nodes in the graph: paper, author and venue. Paper nodes have features: "
        "title, abstract, year and label. Author nodes have features: name. Venue nodes have features: name. "
        "Paper nodes are linked to author nodes, venue nodes, reference nodes and cited by nodes. Author nodes "
        "are linked to paper nodes. Venue nodes are linked to paper nodes."
    ),
    "academic": (
        "There are three types of nodes in the graph: paper, author and venue. Paper nodes have features: "
        "title, abstract, keywords, lang, and year. Author nodes have features: name and organization. Venue "
        "nodes have features: name. Paper nodes are linked to their author nodes, venue nodes, reference nodes "
        "(the papers this paper cite) and cited by nodes (other papers which cite this paper). Author nodes are "
        "linked to their paper nodes. Venue nodes are linked to their paper nodes."
    ),
    "ecommerce": (
        "There are two types of nodes in the graph: item and brand. Item nodes have features: title, "
        "description, price, img, category. Brand nodes have features: name. Item nodes are linked to their "
        "brand nodes, also viewed item nodes, buy after viewing item nodes, also bought item nodes, bought "
        "together item nodes. Brand nodes are linked to their item nodes."
    ),
    "literature": (
        "There are four types of nodes in the graph: book, author, publisher, and series. Book nodes have "
        "features: country code, language code, is ebook, title, description, format, num pages, publication "
        "year, url, popular shelves, and genres. Author nodes have features: name. Publisher nodes have "
        "features: name. Series nodes have features: title and description. Book nodes are linked to their "
        "author nodes, publisher nodes, series nodes and similar books nodes. Author nodes are linked to their "
        "book nodes. Publisher nodes are linked to their book nodes. Series nodes are linked to their book nodes."
    ),
    "healthcare": (
        "There are eleven types of nodes in the graph: Anatomy, Biological Process, Cellular Component, "
        "Compound, Disease, Gene, Molecular Function, Pathway, Pharmacologic Class, Side Effect, Symptom. Each "
        "node has name feature. There are these types of edges: Anatomy-downregulates-Gene, "
        "Anatomy-expresses-Gene, Anatomy-upregulates-Gene, Compound-binds-Gene, Compound-causes-Side Effect, "
        "Compound-downregulates-Gene, Compound-palliates-Disease, Compound-resembles-Compound, "
        "Compound-treats-Disease, Compound-upregulates-Gene, Disease-associates-Gene, "
        "Disease-downregulates-Gene, Disease-localizes-Anatomy, Disease-presents-Symptom, "
        "Disease-resembles-Disease, Disease-upregulates-Gene, Gene-covaries-Gene, Gene-interacts-Gene, "
        "Gene-participates-Biological Process, Gene-participates-Cellular Component, "
        "Gene-participates-Molecular Function, Gene-participates-Pathway, Gene-regulates-Gene, "
        "Pharmacologic Class-includes-Compound."
    ),
    "legal": (
        "There are four types of nodes in the graph: opinion, opinion cluster, docket, and court. Opinion "
        "nodes have features: plain text. Opinion cluster nodes have features: syllabus, judges, case name, "
        "attorneys. Docket nodes have features: pacer case id, case name. Court nodes have features: full "
        "name, start date, end date, citation string. Opinion nodes are linked to their reference nodes and "
        "cited by nodes, as well as their opinion cluster nodes. Opinion cluster nodes are linked to opinion "
        "nodes and docket nodes. Docket nodes are linked to opinion cluster nodes and court nodes. Court nodes "
        "are linked to docket nodes."
    ),
}

_ACADEMIC_DEFINITION = "Definition of the graph: " + GRAPH_DESCRIPTIONS["academic"]

ACADEMIC_DEMONSTRATIONS = (
    _ACADEMIC_DEFINITION
    + """
Question: When was the paper Strongly Interacting Higgs Sector in the Minimal Standard Model published?
Reasoning 1: The question is asking some basic information of a node (Strongly Interacting Higgs Sector in the Minimal Standard Model). We need to find the node in the graph.
Interaction 1: RetrieveNode[Strongly Interacting Higgs Sector in the Minimal Standard Model]
Execution 1: The ID of this node is 3101448248.
Reasoning 2: The question is asking the published date of a paper, we need to check the node feature (year) from the graph.
Interaction 2: NodeFeature[3101448248, year]
Execution 2: 1993
Reasoning 3: The published date of the paper is 1993.
Interaction 3: Finish[1993]""",
    _ACADEMIC_DEFINITION
    + """
Question: How many authors do the paper Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars have?
Reasoning 1: The question is asking information of a node (Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars). We need to find the node in the graph.
Interaction 1: RetrieveNode[Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars]
Execution 1: The ID of this node is 2090642949.
Reasoning 2: The question is asking the number of authors of a paper, we need to calculate the node's author neighbor degree from the graph.
Interaction 2: NodeDegree[2090642949, author]
Execution 2: 2
Reasoning 3: The number of the authors is 2
Interaction 3: Finish[2]""",
    _ACADEMIC_DEFINITION
    + """
Question: What was the publish venue of the paper Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars?
Reasoning 1: The question is asking information of a node (Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars). We need to find the node in the graph.
Interaction 1: RetrieveNode[Mass Accretion Rates in Self-Regulated Disks of T Tauri Stars]
Execution 1: The ID of this node is 2090642949.
Reasoning 2: The question is asking the published venue of a paper, we need to check the node's venue neighbor from the graph.
Interaction 2: NeighbourCheck[2090642949, venue]
Execution 2: ['1980519', '1053242']
Reasoning 3: The ID of the published venue are 1980519 and 1053242. We need to get their names.
Interaction 3: NodeFeature[1980519, name], NodeFeature[1053242, name]
Execution 3: the astrophysical journal, the atmosphere journal
Reasoning 4: The name of the published venues are the astrophysical journal and the atmosphere journal
Interaction 4: Finish[the astrophysical journal, the atmosphere journal]""",
)

DEMONSTRATIONS = {"academic": ACADEMIC_DEMONSTRATIONS}


def split_demonstration(demo: str) -> list[str]:
    """Model turns of a demonstration: the text of each Reasoning/Interaction pair."""
    turns: list[str] = []
    current: list[str] = []
    for line in demo.splitlines():
        if line.startswith("Reasoning "):
            current = [line]
        elif line.startswith("Interaction ") and current:
            current.append(line)
            turns.append("\n".join(current))
            current = []
    return turns
