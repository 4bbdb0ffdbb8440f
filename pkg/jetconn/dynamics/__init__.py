from flask import Blueprint

bp = Blueprint('dynamics', __name__, cli_group=None)

from jetconn.dynamics import commands
