# Configuration file for the Sphinx documentation builder.
#
# Only the options this project sets are listed; see
# http://www.sphinx-doc.org/en/master/config for the full list.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

from foresight_afford import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = "foresight-afford"
copyright = "2026, The foresight-afford authors"
author = "The foresight-afford authors"

version = __version__
release = __version__


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.coverage",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = None

autodoc_member_order = "bysource"


# -- Options for HTML output -------------------------------------------------

html_theme = "alabaster"
html_static_path = ["_static"]
htmlhelp_basename = "foresightafforddoc"


# -- Options for manual page output ------------------------------------------

man_pages = [(master_doc, "foresight-afford", "foresight-afford Documentation", [author], 1)]
