import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "tractTOM.settings")
django.setup()
