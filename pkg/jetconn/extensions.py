from flask_marshmallow import Marshmallow

marshmallow = Marshmallow()
