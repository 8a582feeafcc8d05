from app import create_app
from config import DeskConfig

app = create_app(DeskConfig)

if __name__ == '__main__':
    app()
