# Configuration file for the Sphinx documentation builder.
#
# http://www.sphinx-doc.org/en/master/config

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

from senscen import __version__  # noqa: E402

# -- Project information -----------------------------------------------------

project = "senscen"
copyright = "2026, senscen authors"
author = "senscen authors"

version = ".".join(__version__.split(".")[:2])
release = __version__


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "sphinx_click.ext",
    "sphinx.ext.napoleon",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store", "run.yaml"]
pygments_style = None

autodoc_member_order = "bysource"


# -- Options for HTML output -------------------------------------------------

html_theme = "alabaster"
html_static_path = ["_static"]
htmlhelp_basename = "senscendoc"


# -- Options for other builders ----------------------------------------------

latex_documents = [
    (master_doc, "senscen.tex", "senscen Documentation", author, "manual")
]
man_pages = [(master_doc, "senscen", "senscen Documentation", [author], 1)]
texinfo_documents = [
    (
        master_doc,
        "senscen",
        "senscen Documentation",
        author,
        "senscen",
        "Representative scenarios for clinical trial sensitivity analyses.",
        "Miscellaneous",
    )
]
epub_title = project
epub_exclude_files = ["search.html"]


# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
}
